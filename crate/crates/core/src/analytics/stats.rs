use std::collections::{BTreeMap, BTreeSet};
use std::net::IpAddr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dataset::{BusinessClass, PublisherRecord};
use super::geo::IspType;
use crate::time::{UnixTime, DAY};

/// Marks as fake every username sharing a publishing IP with at least
/// `threshold - 1` other usernames, plus every username the portal removed.
/// Fake publishers lose any Top flag.
pub fn flag_fake(records: &mut [PublisherRecord], threshold: usize) {
    assert!(threshold >= 2, "fake threshold must be at least 2");
    let mut by_ip: BTreeMap<IpAddr, BTreeSet<&str>> = BTreeMap::new();
    for r in records.iter() {
        for &ip in &r.ip_set {
            by_ip.entry(ip).or_default().insert(&r.username);
        }
    }
    let fake: BTreeSet<String> = by_ip
        .values()
        .filter(|users| users.len() >= threshold)
        .flatten()
        .map(|u| u.to_string())
        .collect();
    for r in records.iter_mut() {
        r.flags.fake = r.flags.removed_by_portal || fake.contains(&r.username);
        if r.flags.fake {
            r.flags.top = false;
        }
    }
}

/// Ordering used for ranking: most torrents, then most downloads, then username.
fn rank_key(r: &PublisherRecord) -> (std::cmp::Reverse<usize>, std::cmp::Reverse<u64>, &str) {
    (
        std::cmp::Reverse(r.torrent_count()),
        std::cmp::Reverse(r.downloads_attracted),
        r.username.as_str(),
    )
}

/// Takes the `k` most prolific usernames and drops the fake ones; the rest
/// form the Top group. Sets `flags.top` accordingly and returns the members.
pub fn rank_top(records: &mut [PublisherRecord], k: usize) -> BTreeSet<String> {
    assert!(k >= 1, "k must be at least 1");
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| rank_key(&records[a]).cmp(&rank_key(&records[b])));
    let top: BTreeSet<String> = order
        .into_iter()
        .take(k)
        .filter(|&i| !records[i].flags.fake)
        .map(|i| records[i].username.clone())
        .collect();
    for r in records.iter_mut() {
        r.flags.top = top.contains(&r.username);
    }
    top
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GroupLabel {
    All,
    Fake,
    Top,
    #[serde(rename = "Top_HP")]
    TopHp,
    #[serde(rename = "Top_CI")]
    TopCi,
}

impl GroupLabel {
    pub const ALL: [GroupLabel; 5] = [
        GroupLabel::All,
        GroupLabel::Fake,
        GroupLabel::Top,
        GroupLabel::TopHp,
        GroupLabel::TopCi,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GroupLabel::All => "All",
            GroupLabel::Fake => "Fake",
            GroupLabel::Top => "Top",
            GroupLabel::TopHp => "Top_HP",
            GroupLabel::TopCi => "Top_CI",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Groups<'a> {
    pub members: BTreeMap<GroupLabel, Vec<&'a PublisherRecord>>,
    /// Top members whose addresses have no known provider class.
    pub top_unknown_isp: Vec<&'a PublisherRecord>,
}

/// Splits publishers into the analysis groups. Top is partitioned into
/// Top_HP and Top_CI by majority provider class.
pub fn groups(records: &[PublisherRecord]) -> Groups<'_> {
    let mut members: BTreeMap<GroupLabel, Vec<&PublisherRecord>> =
        GroupLabel::ALL.iter().map(|&g| (g, Vec::new())).collect();
    let mut top_unknown_isp = Vec::new();
    for r in records {
        members.get_mut(&GroupLabel::All).unwrap().push(r);
        if r.flags.fake {
            members.get_mut(&GroupLabel::Fake).unwrap().push(r);
        }
        if r.flags.top {
            members.get_mut(&GroupLabel::Top).unwrap().push(r);
            match r.majority_isp() {
                IspType::Hosting => members.get_mut(&GroupLabel::TopHp).unwrap().push(r),
                IspType::Commercial => members.get_mut(&GroupLabel::TopCi).unwrap().push(r),
                IspType::Unknown => top_unknown_isp.push(r),
            }
        }
    }
    Groups {
        members,
        top_unknown_isp,
    }
}

/// Share of all content held by the top x% of publishers, x = 1..=100.
/// Publishers are ranked by torrent count; the top x% is the first
/// `ceil(x * n / 100)` of them.
pub fn contribution_curve(counts: &[u64]) -> Vec<(u32, f64)> {
    let mut sorted = counts.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let n = sorted.len();
    let total: u64 = sorted.iter().sum();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0u64);
    for c in &sorted {
        prefix.push(prefix.last().unwrap() + c);
    }
    (1..=100u32)
        .map(|x| {
            let k = (x as usize * n).div_ceil(100);
            let share = if total == 0 {
                0.0
            } else {
                prefix[k] as f64 / total as f64
            };
            (x, share)
        })
        .collect()
}

pub fn contribution_curve_of(records: &[PublisherRecord]) -> Vec<(u32, f64)> {
    let counts: Vec<u64> = records.iter().map(|r| r.torrent_count() as u64).collect();
    contribution_curve(&counts)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("empty group")]
pub struct EmptyGroup;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
}

/// Nearest-rank percentile of an ascending slice: the value at rank `ceil(p/100 * n)`.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

pub fn quartiles(values: &[f64]) -> Result<Quartiles, EmptyGroup> {
    if values.is_empty() {
        return Err(EmptyGroup);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(Quartiles {
        p25: nearest_rank(&v, 25.0),
        p50: nearest_rank(&v, 50.0),
        p75: nearest_rank(&v, 75.0),
    })
}

/// Quartiles over publishers of their mean downloaders per torrent.
pub fn popularity_stats(group: &[&PublisherRecord]) -> Result<Quartiles, EmptyGroup> {
    let means: Vec<f64> = group
        .iter()
        .filter(|r| r.torrent_count() > 0)
        .map(|r| r.avg_downloaders())
        .collect();
    quartiles(&means)
}

/// Fraction of the group's torrents in each category; empty categories are
/// reported as `unknown`.
pub fn group_breakdown(group: &[&PublisherRecord]) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for r in group {
        for t in &r.torrents {
            let c = t.category.trim();
            let c = if c.is_empty() { "unknown" } else { c };
            *counts.entry(c.to_owned()).or_default() += 1;
        }
    }
    let total: u64 = counts.values().sum();
    counts.into_iter().map(|(k, n)| (k, n as f64 / total as f64)).collect()
}

/// Lifetime in whole days (at least one) and publications per day.
pub fn longitudinal(record: &PublisherRecord) -> Option<(i64, f64)> {
    let times: Vec<UnixTime> = record.torrents.iter().map(|t| t.published_at).collect();
    let first = *times.iter().min()?;
    let last = *times.iter().max()?;
    let days = ((last - first) / DAY).max(1);
    Some((days, times.len() as f64 / days as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassBucket {
    BtPortal,
    OtherWeb,
    Altruistic,
    Unclassified,
}

impl From<Option<BusinessClass>> for ClassBucket {
    fn from(c: Option<BusinessClass>) -> Self {
        match c {
            Some(BusinessClass::BtPortal) => ClassBucket::BtPortal,
            Some(BusinessClass::OtherWeb) => ClassBucket::OtherWeb,
            Some(BusinessClass::Altruistic) => ClassBucket::Altruistic,
            None => ClassBucket::Unclassified,
        }
    }
}

impl ClassBucket {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassBucket::BtPortal => "bt_portal",
            ClassBucket::OtherWeb => "other_web",
            ClassBucket::Altruistic => "altruistic",
            ClassBucket::Unclassified => "unclassified",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassShare {
    pub publishers: u64,
    pub content_share: f64,
    pub download_share: f64,
}

/// Content and download shares per business class over the whole population.
pub fn class_aggregates(records: &[PublisherRecord]) -> BTreeMap<ClassBucket, ClassShare> {
    let total_content: u64 = records.iter().map(|r| r.torrent_count() as u64).sum();
    let total_downloads: u64 = records.iter().map(|r| r.downloads_attracted).sum();
    let mut acc: BTreeMap<ClassBucket, (u64, u64, u64)> = BTreeMap::new();
    for r in records {
        let e = acc.entry(r.business_class.into()).or_default();
        e.0 += 1;
        e.1 += r.torrent_count() as u64;
        e.2 += r.downloads_attracted;
    }
    let frac = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    acc.into_iter()
        .map(|(k, (p, c, d))| {
            (
                k,
                ClassShare {
                    publishers: p,
                    content_share: frac(c, total_content),
                    download_share: frac(d, total_downloads),
                },
            )
        })
        .collect()
}

/// Median of the values, by nearest rank; `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    quartiles(values).ok().map(|q| q.p50)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedingMedians {
    /// Publishers in the group with seeding metrics.
    pub publishers: u64,
    pub avg_seeding_time: f64,
    pub parallel_torrents: f64,
    pub aggregated_session_time: f64,
}

/// Group medians of the per-publisher seeding metrics.
pub fn seeding_medians(group: &[&PublisherRecord]) -> Option<SeedingMedians> {
    let ms: Vec<_> = group.iter().filter_map(|r| r.seeding).collect();
    let col = |f: fn(&crate::session::SeedingMetrics) -> f64| median(&ms.iter().map(f).collect::<Vec<_>>());
    Some(SeedingMedians {
        publishers: ms.len() as u64,
        avg_seeding_time: col(|m| m.avg_seeding_time)?,
        parallel_torrents: col(|m| m.parallel_torrents)?,
        aggregated_session_time: col(|m| m.aggregated_session_time as f64)?,
    })
}
