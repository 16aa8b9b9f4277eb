use std::collections::{BTreeMap, BTreeSet};
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use super::geo::{GeoDb, IspType};
use super::urls::{extract_urls, PromotedUrl};
use crate::bencode::InfoHash;
use crate::monitor::NoIpReason;
use crate::session::{
    reconstruct_sessions, seeding_metrics, seeding_time, DiscoveryModel, SeedingMetrics, SessionRecord,
};
use crate::store::{EventBody, EventRecord};
use crate::time::{Seconds, UnixTime, MINUTE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusinessClass {
    BtPortal,
    OtherWeb,
    Altruistic,
}

impl BusinessClass {
    pub fn as_str(self) -> &'static str {
        match self {
            BusinessClass::BtPortal => "bt_portal",
            BusinessClass::OtherWeb => "other_web",
            BusinessClass::Altruistic => "altruistic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "bt_portal" => Some(BusinessClass::BtPortal),
            "other_web" => Some(BusinessClass::OtherWeb),
            "altruistic" => Some(BusinessClass::Altruistic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiIpCase {
    SingleIp,
    FewHosting,
    SingleCommercialIsp,
    MultiCommercialIsp,
}

impl MultiIpCase {
    pub fn as_str(self) -> &'static str {
        match self {
            MultiIpCase::SingleIp => "single_ip",
            MultiIpCase::FewHosting => "few_hosting",
            MultiIpCase::SingleCommercialIsp => "single_commercial_isp",
            MultiIpCase::MultiCommercialIsp => "multi_commercial_isp",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub fake: bool,
    pub top: bool,
    pub removed_by_portal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorrentSummary {
    pub infohash: InfoHash,
    pub portal_id: String,
    pub title: String,
    pub filename: String,
    pub category: String,
    pub subcategory: String,
    pub size: u64,
    pub published_at: UnixTime,
    /// Unique downloader IPs seen in this torrent's snapshots.
    pub downloaders: u64,
    /// Address pinned for this torrent at birth, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identified_ip: Option<IpAddr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason_no_ip: Option<NoIpReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeding_time: Option<Seconds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublisherRecord {
    pub username: String,
    pub ip_set: BTreeSet<IpAddr>,
    /// Ordered by publication time, then infohash.
    pub torrents: Vec<TorrentSummary>,
    /// Sum over torrents of unique downloader IPs.
    pub downloads_attracted: u64,
    pub flags: Flags,
    pub isp_class: BTreeMap<IpAddr, IspType>,
    pub multi_ip_case: Option<MultiIpCase>,
    pub business_class: Option<BusinessClass>,
    pub promoted_urls: BTreeSet<PromotedUrl>,
    pub seeding: Option<SeedingMetrics>,
}

impl PublisherRecord {
    pub fn torrent_count(&self) -> usize {
        self.torrents.len()
    }

    /// Mean unique downloaders per torrent.
    pub fn avg_downloaders(&self) -> f64 {
        if self.torrents.is_empty() {
            0.0
        } else {
            self.downloads_attracted as f64 / self.torrents.len() as f64
        }
    }

    /// Majority class of the publisher's identified IPs; unknown IPs do not
    /// vote and a tie has no majority.
    pub fn majority_isp(&self) -> IspType {
        let h = self.isp_class.values().filter(|t| **t == IspType::Hosting).count();
        let c = self.isp_class.values().filter(|t| **t == IspType::Commercial).count();
        match h.cmp(&c) {
            std::cmp::Ordering::Greater => IspType::Hosting,
            std::cmp::Ordering::Less => IspType::Commercial,
            std::cmp::Ordering::Equal => IspType::Unknown,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    pub fake_threshold: usize,
    pub top_k: usize,
    pub model: DiscoveryModel,
    /// Sampling step for parallel-torrent counting.
    pub tick: Seconds,
    /// Crawler addresses never counted as downloaders.
    pub vantage_ips: BTreeSet<IpAddr>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            fake_threshold: 5,
            top_k: 100,
            model: DiscoveryModel::default(),
            tick: MINUTE,
            vantage_ips: BTreeSet::new(),
        }
    }
}

/// Everything derived from one event log.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub publishers: Vec<PublisherRecord>,
    /// Reconstructed sessions keyed by (username, infohash).
    pub sessions: BTreeMap<(String, InfoHash), Vec<SessionRecord>>,
    pub stats: IngestStats,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub feed_items: u64,
    pub fetch_failures: u64,
    pub torrents: u64,
    pub identified: u64,
    pub no_ip: BTreeMap<NoIpReason, u64>,
    pub snapshots: u64,
    pub removals: u64,
}

struct TorrentAcc {
    summary: TorrentSummary,
    username: String,
    description: String,
    files: Vec<String>,
    peers: BTreeSet<IpAddr>,
    sightings: Vec<UnixTime>,
}

/// Builds one record per publishing username from the log: torrents from
/// fetched feed items, addresses from identifications, downloaders and
/// publisher sightings from snapshots. Flags other than `removed_by_portal`
/// are left unset.
pub fn resolve_identities(events: &[EventRecord], opts: &AnalysisOptions) -> Dataset {
    let mut stats = IngestStats::default();
    let mut torrents: BTreeMap<InfoHash, TorrentAcc> = BTreeMap::new();
    let mut ips: BTreeMap<String, BTreeSet<IpAddr>> = BTreeMap::new();
    let mut removed: BTreeSet<String> = BTreeSet::new();

    for ev in events {
        match &ev.body {
            EventBody::FeedItem(f) => {
                stats.feed_items += 1;
                let Some(meta) = &f.torrent else {
                    stats.fetch_failures += 1;
                    continue;
                };
                torrents.entry(meta.infohash).or_insert_with(|| TorrentAcc {
                    summary: TorrentSummary {
                        infohash: meta.infohash,
                        portal_id: f.item.portal_id.clone(),
                        title: f.item.title.clone(),
                        filename: meta.name_lossy(),
                        category: f.item.category.clone(),
                        subcategory: f.item.subcategory.clone(),
                        size: meta.total_size,
                        published_at: f.item.published_at,
                        downloaders: 0,
                        identified_ip: None,
                        reason_no_ip: None,
                        seeding_time: None,
                    },
                    username: f.item.username.clone(),
                    description: f.item.description.clone(),
                    files: meta.files.clone(),
                    peers: BTreeSet::new(),
                    sightings: Vec::new(),
                });
            }
            EventBody::Identification(id) => {
                let set = ips.entry(id.username.clone()).or_default();
                if let Some(ip) = id.ip {
                    set.insert(ip);
                    stats.identified += 1;
                }
                if let Some(r) = id.reason_no_ip {
                    *stats.no_ip.entry(r).or_default() += 1;
                }
                if let Some(t) = torrents.get_mut(&id.infohash) {
                    if t.summary.identified_ip.is_none() && t.summary.reason_no_ip.is_none() {
                        t.summary.identified_ip = id.ip;
                        t.summary.reason_no_ip = id.reason_no_ip;
                    } else if id.ip.is_some() {
                        // a later retry succeeded
                        t.summary.identified_ip = id.ip;
                        t.summary.reason_no_ip = None;
                    }
                }
            }
            EventBody::PortalRemoval(r) => {
                stats.removals += 1;
                removed.insert(r.username.clone());
            }
            _ => {}
        }
    }
    stats.torrents = torrents.len() as u64;

    let empty = BTreeSet::new();
    for ev in events {
        let EventBody::Snapshot(s) = &ev.body else { continue };
        stats.snapshots += 1;
        let Some(t) = torrents.get_mut(&s.infohash) else {
            continue;
        };
        let own = ips.get(&t.username).unwrap_or(&empty);
        let mut seen_publisher = false;
        for p in &s.peers {
            let ip = p.ip();
            if own.contains(&ip) {
                seen_publisher = true;
            } else if !opts.vantage_ips.contains(&ip) {
                t.peers.insert(ip);
            }
        }
        if seen_publisher {
            t.sightings.push(s.observed_at);
        }
    }

    let threshold = opts.model.offline_threshold();
    let mut sessions = BTreeMap::new();
    let mut by_user: BTreeMap<String, Vec<TorrentAcc>> = BTreeMap::new();
    for (_, t) in torrents {
        by_user.entry(t.username.clone()).or_default().push(t);
    }
    let mut publishers = Vec::with_capacity(by_user.len());
    for (username, mut ts) in by_user {
        ts.sort_by_key(|t| (t.summary.published_at, t.summary.infohash));
        let mut promoted = BTreeSet::new();
        let mut per_torrent = Vec::with_capacity(ts.len());
        let mut summaries = Vec::with_capacity(ts.len());
        for mut t in ts {
            promoted.extend(extract_urls(&t.summary.filename, &t.description, &t.files));
            t.summary.downloaders = t.peers.len() as u64;
            t.sightings.sort_unstable();
            let ss = reconstruct_sessions(&username, t.summary.infohash, &t.sightings, threshold);
            if !ss.is_empty() {
                t.summary.seeding_time = Some(seeding_time(&ss));
            }
            sessions.insert((username.clone(), t.summary.infohash), ss.clone());
            per_torrent.push(ss);
            summaries.push(t.summary);
        }
        publishers.push(PublisherRecord {
            ip_set: ips.get(&username).cloned().unwrap_or_default(),
            downloads_attracted: summaries.iter().map(|t| t.downloaders).sum(),
            torrents: summaries,
            flags: Flags {
                removed_by_portal: removed.contains(&username),
                ..Flags::default()
            },
            isp_class: BTreeMap::new(),
            multi_ip_case: None,
            business_class: None,
            promoted_urls: promoted,
            seeding: seeding_metrics(&per_torrent, opts.tick),
            username,
        });
    }
    Dataset {
        publishers,
        sessions,
        stats,
    }
}

/// Fills `isp_class` and `multi_ip_case` from the geo database.
pub fn enrich_geo(records: &mut [PublisherRecord], geo: &GeoDb) {
    for r in records {
        r.isp_class = r.ip_set.iter().map(|&ip| (ip, geo.lookup(ip).isp_type)).collect();
        r.multi_ip_case = classify_multi_ip(r, geo);
    }
}

/// Buckets a publisher by how its addresses spread over providers. `None`
/// when it has no address with a known provider.
pub fn classify_multi_ip(record: &PublisherRecord, geo: &GeoDb) -> Option<MultiIpCase> {
    if record.ip_set.is_empty() {
        return None;
    }
    if record.ip_set.len() == 1 {
        return Some(MultiIpCase::SingleIp);
    }
    let mut hosting = 0usize;
    let mut commercial = 0usize;
    let mut commercial_isps = BTreeSet::new();
    for &ip in &record.ip_set {
        let info = geo.lookup(ip);
        match info.isp_type {
            IspType::Hosting => hosting += 1,
            IspType::Commercial => {
                commercial += 1;
                commercial_isps.insert(info.isp_name);
            }
            IspType::Unknown => {}
        }
    }
    Some(match (hosting, commercial) {
        (0, 0) => return None,
        (_, 0) => MultiIpCase::FewHosting,
        (0, _) if commercial_isps.len() == 1 => MultiIpCase::SingleCommercialIsp,
        (0, _) => MultiIpCase::MultiCommercialIsp,
        (h, c) if h > c => MultiIpCase::FewHosting,
        _ => MultiIpCase::MultiCommercialIsp,
    })
}

/// Sets `business_class` from operator annotations keyed by username.
pub fn annotate(records: &mut [PublisherRecord], classes: &BTreeMap<String, BusinessClass>) {
    for r in records {
        r.business_class = classes.get(&r.username).copied();
    }
}
