use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use seedscope_core::time::{parse_duration, Seconds, UnixTime, DAY, HOUR, MINUTE};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading world config: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid world config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid world config: {0}")]
    Invalid(String),
}

/// A duration written as `90`, `"18m"`, `"4h"` or `"2d"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Span(pub Seconds);

impl Serialize for Span {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}s", self.0))
    }
}

impl<'de> Deserialize<'de> for Span {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(n) => Ok(Span(n)),
            Raw::Text(s) => parse_duration(&s)
                .map(Span)
                .ok_or_else(|| serde::de::Error::custom(format!("bad duration `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IspKind {
    Hosting,
    Commercial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Regular,
    TopHosting,
    TopCommercial,
    Fake,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Regular => "regular",
            Role::TopHosting => "top_hosting",
            Role::TopCommercial => "top_commercial",
            Role::Fake => "fake",
        })
    }
}

/// Torrents per honest publisher, by rank. With a Zipf exponent `s` the
/// publisher at rank `i` (from 1) gets `max(1, round(scale * i^-s))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContentCounts {
    pub zipf_exponent: Option<f64>,
    #[serde(default = "default_zipf_scale")]
    pub zipf_scale: f64,
    pub counts: Option<Vec<u32>>,
}

fn default_zipf_scale() -> f64 {
    20.0
}

impl Default for ContentCounts {
    fn default() -> Self {
        Self {
            zipf_exponent: Some(1.0),
            zipf_scale: default_zipf_scale(),
            counts: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FakeSpec {
    /// Number of fake entities, each behind one hosting IP.
    pub count: usize,
    pub usernames_per_ip: usize,
    pub torrents_per_username: usize,
    /// Share of fake usernames whose portal page gets removed.
    pub removed_fraction: f64,
    /// Delay between a username's first publication and its removal.
    pub removal_after: Span,
}

impl Default for FakeSpec {
    fn default() -> Self {
        Self {
            count: 0,
            usernames_per_ip: 8,
            torrents_per_username: 6,
            removed_fraction: 0.5,
            removal_after: Span(3 * DAY),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeerSessions {
    /// Mean of the exponential downloader session length.
    pub mean: Span,
    /// Sessions shorter than this are raised to it.
    pub floor: Span,
    /// Share of downloaders of genuine content that finish and keep seeding.
    pub complete_fraction: f64,
    /// Share of downloaders behind NAT.
    pub nat_fraction: f64,
}

impl Default for PeerSessions {
    fn default() -> Self {
        Self {
            mean: Span(2 * HOUR),
            floor: Span(15 * MINUTE),
            complete_fraction: 0.7,
            nat_fraction: 0.3,
        }
    }
}

/// How publishers of one role publish and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleBehavior {
    /// Mean time the publisher seeds each torrent.
    pub seed_time: Span,
    /// Seeding times vary uniformly by this fraction around the mean.
    #[serde(default = "default_jitter")]
    pub seed_jitter: f64,
    /// Downloader arrivals per hour right after publication.
    pub popularity: f64,
    /// Arrival rate decays exponentially with this time constant.
    pub arrival_decay: Span,
    pub isp: IspKind,
    #[serde(default = "one")]
    pub ips: usize,
    /// Publications fall inside a window of this length; whole timeline if unset.
    pub active_window: Option<Span>,
}

fn default_jitter() -> f64 {
    0.25
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Roles {
    pub regular: RoleBehavior,
    pub top_hosting: RoleBehavior,
    pub top_commercial: RoleBehavior,
    pub fake: RoleBehavior,
}

impl Roles {
    pub fn get(&self, role: Role) -> &RoleBehavior {
        match role {
            Role::Regular => &self.regular,
            Role::TopHosting => &self.top_hosting,
            Role::TopCommercial => &self.top_commercial,
            Role::Fake => &self.fake,
        }
    }
}

impl Default for Roles {
    fn default() -> Self {
        Self {
            regular: RoleBehavior {
                seed_time: Span(5 * HOUR),
                seed_jitter: 0.5,
                popularity: 2.0,
                arrival_decay: Span(8 * HOUR),
                isp: IspKind::Commercial,
                ips: 1,
                active_window: None,
            },
            top_hosting: RoleBehavior {
                seed_time: Span(2 * DAY),
                seed_jitter: 0.25,
                popularity: 16.0,
                arrival_decay: Span(10 * HOUR),
                isp: IspKind::Hosting,
                ips: 2,
                active_window: None,
            },
            top_commercial: RoleBehavior {
                seed_time: Span(20 * HOUR),
                seed_jitter: 0.25,
                popularity: 14.0,
                arrival_decay: Span(10 * HOUR),
                isp: IspKind::Commercial,
                ips: 1,
                active_window: None,
            },
            fake: RoleBehavior {
                seed_time: Span(5 * DAY),
                seed_jitter: 0.1,
                popularity: 4.0,
                arrival_decay: Span(DAY),
                isp: IspKind::Hosting,
                ips: 1,
                active_window: Some(Span(4 * DAY)),
            },
        }
    }
}

/// Business classes handed out, in rank order, to the most prolific honest
/// publishers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassMix {
    pub bt_portal: usize,
    pub other_web: usize,
    pub altruistic: usize,
}

impl ClassMix {
    pub fn total(&self) -> usize {
        self.bt_portal + self.other_web + self.altruistic
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PortalSpec {
    pub portal_id: String,
    pub feed_url: String,
    pub torrent_base_url: String,
    pub tracker_url: String,
    /// Items shown in the feed, newest first.
    pub feed_size: usize,
    pub poll_interval: Span,
}

impl Default for PortalSpec {
    fn default() -> Self {
        Self {
            portal_id: "simportal".into(),
            feed_url: "http://portal.sim/rss".into(),
            torrent_base_url: "http://portal.sim/torrent/".into(),
            tracker_url: "http://tracker.sim/announce".into(),
            feed_size: 50,
            poll_interval: Span(MINUTE),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorSpec {
    pub vantages: usize,
    pub min_interval: Span,
    pub first_query_delay: Span,
    pub id_retry_window: Span,
}

impl Default for MonitorSpec {
    fn default() -> Self {
        Self {
            vantages: 3,
            min_interval: Span(10 * MINUTE),
            first_query_delay: Span(0),
            id_retry_window: Span(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub rng_seed: u64,
    /// Virtual time of the first possible publication.
    pub start: UnixTime,
    pub timeline_length: Span,
    /// Honest publishers.
    pub publisher_count: usize,
    pub content_count_distribution: ContentCounts,
    pub fake_publisher_spec: FakeSpec,
    /// Honest publishers, taken from the top ranks, that seed from hosting providers.
    pub top_hosting: usize,
    /// Honest publishers, taken from the top ranks, that seed from commercial ISPs.
    pub top_commercial: usize,
    /// Share of regular publishers behind NAT.
    pub nat_fraction: f64,
    /// Share of honest torrents whose swarm predates the portal listing.
    pub prepublished_fraction: f64,
    /// Share of honest torrents seeded from two machines from the start.
    pub co_seeded_fraction: f64,
    /// Share of honest torrents whose publisher starts seeding after the listing.
    pub late_start_fraction: f64,
    pub swarm_population_cap: usize,
    pub tracker_sample_size: usize,
    pub peer_session_distribution: PeerSessions,
    pub business_class_mix: ClassMix,
    /// Category name to weight.
    pub category_mix: BTreeMap<String, f64>,
    pub roles: Roles,
    pub portal: PortalSpec,
    pub monitor: MonitorSpec,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            rng_seed: 1,
            start: 1_262_304_000,
            timeline_length: Span(7 * DAY),
            publisher_count: 50,
            content_count_distribution: ContentCounts::default(),
            fake_publisher_spec: FakeSpec::default(),
            top_hosting: 0,
            top_commercial: 0,
            nat_fraction: 0.05,
            prepublished_fraction: 0.1,
            co_seeded_fraction: 0.1,
            late_start_fraction: 0.03,
            swarm_population_cap: 165,
            tracker_sample_size: 50,
            peer_session_distribution: PeerSessions::default(),
            business_class_mix: ClassMix::default(),
            category_mix: [("Video", 0.55), ("Audio", 0.2), ("Software", 0.15), ("Books", 0.1)]
                .into_iter()
                .map(|(k, v)| (k.to_owned(), v))
                .collect(),
            roles: Roles::default(),
            portal: PortalSpec::default(),
            monitor: MonitorSpec::default(),
        }
    }
}

impl WorldConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let c: WorldConfig = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("world config serializes")
    }

    /// Torrent counts of the honest publishers in rank order.
    pub fn honest_counts(&self) -> Vec<u32> {
        let d = &self.content_count_distribution;
        match (&d.counts, d.zipf_exponent) {
            (Some(c), _) => c.clone(),
            (None, Some(s)) => zipf_counts(self.publisher_count, s, d.zipf_scale),
            (None, None) => vec![1; self.publisher_count],
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let probs = [
            ("nat_fraction", self.nat_fraction),
            ("prepublished_fraction", self.prepublished_fraction),
            ("co_seeded_fraction", self.co_seeded_fraction),
            ("late_start_fraction", self.late_start_fraction),
            (
                "peer_session_distribution.complete_fraction",
                self.peer_session_distribution.complete_fraction,
            ),
            (
                "peer_session_distribution.nat_fraction",
                self.peer_session_distribution.nat_fraction,
            ),
            (
                "fake_publisher_spec.removed_fraction",
                self.fake_publisher_spec.removed_fraction,
            ),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        if self.prepublished_fraction + self.co_seeded_fraction + self.late_start_fraction > 1.0 {
            return bad("prepublished, co-seeded and late-start fractions sum above 1".into());
        }
        let d = &self.content_count_distribution;
        match (&d.counts, d.zipf_exponent) {
            (Some(_), Some(_)) => return bad("give either counts or zipf_exponent, not both".into()),
            (Some(c), None) if c.len() != self.publisher_count => {
                return bad(format!("{} counts for {} publishers", c.len(), self.publisher_count))
            }
            (Some(c), None) if c.contains(&0) => return bad("every publisher needs at least one torrent".into()),
            (None, Some(s)) if s.is_nan() || s < 0.0 => return bad(format!("zipf_exponent {s} is negative")),
            _ => {}
        }
        if d.zipf_scale.is_nan() || d.zipf_scale <= 0.0 {
            return bad("zipf_scale must be positive".into());
        }
        if self.top_hosting + self.top_commercial > self.publisher_count {
            return bad("more top publishers than publishers".into());
        }
        if self.business_class_mix.total() > self.publisher_count {
            return bad("more business classes than publishers".into());
        }
        let f = &self.fake_publisher_spec;
        if f.count > 0 && (f.usernames_per_ip == 0 || f.torrents_per_username == 0) {
            return bad("fake publishers need usernames and torrents".into());
        }
        if self.swarm_population_cap == 0 || self.tracker_sample_size == 0 {
            return bad("swarm_population_cap and tracker_sample_size must be positive".into());
        }
        if self.timeline_length.0 <= 0 {
            return bad("timeline_length must be positive".into());
        }
        if self.category_mix.is_empty() || self.category_mix.values().any(|w| w.is_nan() || *w < 0.0) {
            return bad("category_mix needs non-negative weights".into());
        }
        if self.category_mix.values().sum::<f64>() <= 0.0 {
            return bad("category_mix weights sum to zero".into());
        }
        for role in [Role::Regular, Role::TopHosting, Role::TopCommercial, Role::Fake] {
            let b = self.roles.get(role);
            if b.seed_time.0 <= 0 || b.arrival_decay.0 <= 0 || b.ips == 0 {
                return bad(format!("{role}: seed_time, arrival_decay and ips must be positive"));
            }
            if b.popularity.is_nan() || b.popularity < 0.0 || !(0.0..1.0).contains(&b.seed_jitter) {
                return bad(format!("{role}: bad popularity or seed_jitter"));
            }
        }
        let p = &self.peer_session_distribution;
        if p.mean.0 <= 0 || p.floor.0 < 0 {
            return bad("peer session mean must be positive".into());
        }
        if self.monitor.vantages == 0 || self.monitor.min_interval.0 <= 0 || self.portal.poll_interval.0 <= 0 {
            return bad("monitor needs vantages, a positive min_interval and poll_interval".into());
        }
        if self.portal.feed_size == 0 {
            return bad("feed_size must be positive".into());
        }
        Ok(())
    }
}

/// `max(1, round(scale * i^-s))` for ranks `i = 1..=n`.
pub fn zipf_counts(n: usize, s: f64, scale: f64) -> Vec<u32> {
    (1..=n)
        .map(|i| ((scale * (i as f64).powf(-s)).round() as u32).max(1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        WorldConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let c = WorldConfig::default();
        assert_eq!(WorldConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn durations_accept_units() {
        let c = WorldConfig::from_toml("timeline_length = \"3d\"\n[monitor]\nmin_interval = 900\n").unwrap();
        assert_eq!(c.timeline_length, Span(3 * DAY));
        assert_eq!(c.monitor.min_interval, Span(900));
    }

    #[test]
    fn rejects_bad_probability() {
        assert!(matches!(
            WorldConfig::from_toml("nat_fraction = 1.5"),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn explicit_counts_must_match() {
        let text = "publisher_count = 2\n[content_count_distribution]\ncounts = [3, 1, 1]\n";
        assert!(WorldConfig::from_toml(text).is_err());
        let text = "publisher_count = 3\n[content_count_distribution]\ncounts = [3, 1, 1]\n";
        assert_eq!(WorldConfig::from_toml(text).unwrap().honest_counts(), vec![3, 1, 1]);
    }

    #[test]
    fn zipf() {
        assert_eq!(zipf_counts(4, 1.0, 10.0), vec![10, 5, 3, 3]);
        assert_eq!(zipf_counts(3, 2.0, 1.0), vec![1, 1, 1]);
    }
}
