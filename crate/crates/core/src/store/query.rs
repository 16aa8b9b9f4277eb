use std::collections::{BTreeMap, BTreeSet};
use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use super::event::{EventBody, EventRecord};
use super::log::StoreError;
use crate::analytics::{
    analyze, longitudinal, AnalysisOptions, BusinessClass, Flags, GeoDb, IspType, MultiIpCase, PromotedUrl,
    TorrentSummary,
};
use crate::session::SeedingMetrics;
use crate::time::UnixTime;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileIp {
    pub ip: IpAddr,
    pub isp: String,
    pub isp_type: IspType,
    pub city: String,
    pub country: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRemoval {
    pub ts: UnixTime,
    pub portal_id: String,
}

/// Everything known about one username, rebuilt from the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublisherProfile {
    pub username: String,
    pub torrents: Vec<TorrentSummary>,
    pub ips: Vec<ProfileIp>,
    pub flags: Flags,
    pub removals: Vec<ProfileRemoval>,
    pub promoted_urls: BTreeSet<PromotedUrl>,
    pub business_class: Option<BusinessClass>,
    pub multi_ip_case: Option<MultiIpCase>,
    pub downloads_attracted: u64,
    pub lifetime_days: Option<i64>,
    pub publish_rate: Option<f64>,
    pub seeding: Option<SeedingMetrics>,
}

/// Assembles the profile of `username`. Fake and Top flags are computed
/// over the whole log, so the result matches the analysis reports.
pub fn query_publisher(
    events: &[EventRecord],
    username: &str,
    opts: &AnalysisOptions,
    geo: &GeoDb,
    classes: &BTreeMap<String, BusinessClass>,
) -> Result<PublisherProfile, StoreError> {
    let analysis = analyze(events, opts, geo, classes);
    let rec = analysis
        .dataset
        .publishers
        .iter()
        .find(|r| r.username == username)
        .ok_or_else(|| StoreError::NotFound(format!("publisher `{username}`")))?;
    let removals = events
        .iter()
        .filter_map(|e| match &e.body {
            EventBody::PortalRemoval(r) if r.username == username => Some(ProfileRemoval {
                ts: e.ts,
                portal_id: r.portal_id.clone(),
            }),
            _ => None,
        })
        .collect();
    let ips = rec
        .ip_set
        .iter()
        .map(|&ip| {
            let info = geo.lookup(ip);
            ProfileIp {
                ip,
                isp: info.isp_name,
                isp_type: info.isp_type,
                city: info.city,
                country: info.country,
            }
        })
        .collect();
    let (lifetime_days, publish_rate) = longitudinal(rec).unzip();
    Ok(PublisherProfile {
        username: rec.username.clone(),
        torrents: rec.torrents.clone(),
        ips,
        flags: rec.flags,
        removals,
        promoted_urls: rec.promoted_urls.clone(),
        business_class: rec.business_class,
        multi_ip_case: rec.multi_ip_case,
        downloads_attracted: rec.downloads_attracted,
        lifetime_days,
        publish_rate,
        seeding: rec.seeding,
    })
}
