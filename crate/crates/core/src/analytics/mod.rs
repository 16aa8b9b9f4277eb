//! Publisher-level statistics over an event log: identity resolution, fake
//! detection, the Top group, content skew, provider breakdown, popularity,
//! promoted sites, longevity and business classes.

mod dataset;
mod geo;
mod report;
mod stats;
mod urls;

pub use dataset::{
    annotate, classify_multi_ip, enrich_geo, resolve_identities, AnalysisOptions, BusinessClass, Dataset, Flags,
    IngestStats, MultiIpCase, PublisherRecord, TorrentSummary,
};
pub use geo::{GeoDb, GeoError, IspInfo, IspType};
pub use report::{analyze, Analysis, GroupReport, ModelSummary, Report, Summary, PUBLISHER_COLUMNS};
pub use stats::{
    class_aggregates, contribution_curve, contribution_curve_of, flag_fake, group_breakdown, groups, longitudinal,
    median, nearest_rank, popularity_stats, quartiles, rank_top, seeding_medians, ClassBucket, ClassShare, EmptyGroup,
    GroupLabel, Groups, Quartiles, SeedingMedians,
};
pub use urls::{extract_urls, PromotedUrl, UrlChannel};
