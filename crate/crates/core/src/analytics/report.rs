use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::dataset::{annotate, enrich_geo, resolve_identities, AnalysisOptions, BusinessClass, Dataset, IngestStats};
use super::geo::GeoDb;
use super::stats::{
    class_aggregates, contribution_curve_of, flag_fake, group_breakdown, groups, longitudinal, popularity_stats,
    rank_top, seeding_medians, ClassBucket, ClassShare, GroupLabel, Quartiles, SeedingMedians,
};
use crate::session::DiscoveryModel;
use crate::store::EventRecord;

/// Full analysis of one log.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub dataset: Dataset,
    pub top: BTreeSet<String>,
    pub options: AnalysisOptions,
}

/// Runs every stage: identity resolution, geo enrichment, annotations, fake
/// flagging and Top ranking.
pub fn analyze(
    events: &[EventRecord],
    opts: &AnalysisOptions,
    geo: &GeoDb,
    classes: &BTreeMap<String, BusinessClass>,
) -> Analysis {
    let mut dataset = resolve_identities(events, opts);
    enrich_geo(&mut dataset.publishers, geo);
    annotate(&mut dataset.publishers, classes);
    flag_fake(&mut dataset.publishers, opts.fake_threshold);
    let top = rank_top(&mut dataset.publishers, opts.top_k);
    Analysis {
        dataset,
        top,
        options: opts.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub n: f64,
    pub w: f64,
    pub p_target: f64,
    pub m: u32,
    pub inter_query_s: i64,
    pub offline_threshold_s: i64,
}

impl From<&DiscoveryModel> for ModelSummary {
    fn from(m: &DiscoveryModel) -> Self {
        Self {
            n: m.n,
            w: m.w,
            p_target: m.p_target,
            m: m.m(),
            inter_query_s: m.inter_query,
            offline_threshold_s: m.offline_threshold(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupReport {
    pub members: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub popularity: Option<Quartiles>,
    pub categories: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeding: Option<SeedingMedians>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub model: ModelSummary,
    pub fake_threshold: usize,
    pub top_k: usize,
    pub ingest: IngestStats,
    pub publishers: u64,
    pub fake: u64,
    pub top: u64,
    pub top_unknown_isp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub summary: Summary,
    pub groups: BTreeMap<GroupLabel, GroupReport>,
    pub contribution: Vec<(u32, f64)>,
    pub classes: BTreeMap<ClassBucket, ClassShare>,
}

impl Analysis {
    pub fn report(&self) -> Report {
        let recs = &self.dataset.publishers;
        let g = groups(recs);
        let group_reports = g
            .members
            .iter()
            .map(|(&label, members)| {
                (
                    label,
                    GroupReport {
                        members: members.len() as u64,
                        popularity: popularity_stats(members).ok(),
                        categories: group_breakdown(members),
                        seeding: seeding_medians(members),
                    },
                )
            })
            .collect();
        Report {
            summary: Summary {
                model: (&self.options.model).into(),
                fake_threshold: self.options.fake_threshold,
                top_k: self.options.top_k,
                ingest: self.dataset.stats.clone(),
                publishers: recs.len() as u64,
                fake: recs.iter().filter(|r| r.flags.fake).count() as u64,
                top: self.top.len() as u64,
                top_unknown_isp: g.top_unknown_isp.len() as u64,
            },
            groups: group_reports,
            contribution: if recs.is_empty() {
                vec![]
            } else {
                contribution_curve_of(recs)
            },
            classes: class_aggregates(recs),
        }
    }

    /// Writes the report files into `dir` and returns their paths.
    ///
    /// * `summary.json`, `groups.json`: run summary and per-group statistics.
    /// * `contribution.csv`: `top_percent,content_share`.
    /// * `classes.csv`: `class,publishers,content_share,download_share`.
    /// * `publishers.csv`: one row per publisher, see [`PUBLISHER_COLUMNS`].
    /// * `sessions.csv`: `username,infohash,start,end,observations`.
    pub fn write_report(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let report = self.report();
        let mut written = Vec::new();
        let mut put = |name: &str, bytes: Vec<u8>| -> io::Result<()> {
            let p = dir.join(name);
            fs::write(&p, bytes)?;
            written.push(p);
            Ok(())
        };
        put("summary.json", json(&report.summary))?;
        put("groups.json", json(&report.groups))?;

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["top_percent", "content_share"])?;
        for (x, s) in &report.contribution {
            w.write_record([x.to_string(), s.to_string()])?;
        }
        put("contribution.csv", w.into_inner().map_err(|e| e.into_error())?)?;

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["class", "publishers", "content_share", "download_share"])?;
        for (k, s) in &report.classes {
            w.write_record([
                k.as_str().to_owned(),
                s.publishers.to_string(),
                s.content_share.to_string(),
                s.download_share.to_string(),
            ])?;
        }
        put("classes.csv", w.into_inner().map_err(|e| e.into_error())?)?;

        put("publishers.csv", self.publishers_csv()?)?;

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["username", "infohash", "start", "end", "observations"])?;
        for ss in self.dataset.sessions.values() {
            for s in ss {
                w.write_record([
                    s.publisher_id.clone(),
                    s.infohash.to_hex(),
                    s.start.to_string(),
                    s.end.to_string(),
                    s.observation_count.to_string(),
                ])?;
            }
        }
        put("sessions.csv", w.into_inner().map_err(|e| e.into_error())?)?;
        Ok(written)
    }

    fn publishers_csv(&self) -> io::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(PUBLISHER_COLUMNS)?;
        let opt = |v: Option<String>| v.unwrap_or_default();
        for r in &self.dataset.publishers {
            let (life, rate) = longitudinal(r).unzip();
            w.write_record([
                r.username.clone(),
                r.torrent_count().to_string(),
                r.downloads_attracted.to_string(),
                r.ip_set.iter().map(|ip| ip.to_string()).collect::<Vec<_>>().join(" "),
                r.flags.fake.to_string(),
                r.flags.top.to_string(),
                r.flags.removed_by_portal.to_string(),
                r.majority_isp().as_str().to_owned(),
                opt(r.multi_ip_case.map(|c| c.as_str().to_owned())),
                opt(r.business_class.map(|c| c.as_str().to_owned())),
                opt(life.map(|d| d.to_string())),
                opt(rate.map(|x| x.to_string())),
                opt(r.seeding.map(|s| s.avg_seeding_time.to_string())),
                opt(r.seeding.map(|s| s.parallel_torrents.to_string())),
                opt(r.seeding.map(|s| s.aggregated_session_time.to_string())),
                r.promoted_urls
                    .iter()
                    .map(|u| u.domain.as_str())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect::<Vec<_>>()
                    .join(" "),
            ])?;
        }
        w.into_inner().map_err(|e| e.into_error())
    }
}

pub const PUBLISHER_COLUMNS: [&str; 16] = [
    "username",
    "torrents",
    "downloads",
    "ips",
    "fake",
    "top",
    "removed_by_portal",
    "isp_class",
    "multi_ip_case",
    "business_class",
    "lifetime_days",
    "publish_rate",
    "avg_seeding_time_s",
    "parallel_torrents",
    "aggregated_session_s",
    "promoted_domains",
];

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("report serializes");
    b.push(b'\n');
    b
}
