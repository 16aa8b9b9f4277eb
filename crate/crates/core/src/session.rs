//! Discovery-probability model, offline threshold, session reconstruction
//! and seeding metrics.
//!
//! A tracker answering each query with `W` uniformly sampled peers out of `N`
//! returns a given peer in `m` consecutive queries with probability
//! `1 - (1 - W/N)^m`. The number of queries needed to reach a target
//! probability, times the spacing of queries, bounds how long a present
//! publisher can go unseen; a longer gap means its session ended.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bencode::InfoHash;
use crate::time::{parse_duration, Seconds, UnixTime, HOUR, MINUTE};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("bad model override `{0}`")]
    Override(String),
}

/// Probability of seeing one specific peer at least once in `m` queries.
pub fn discovery_probability(n: f64, w: f64, m: u32) -> Result<f64, ModelError> {
    if n.is_nan() || n < 1.0 {
        return Err(ModelError::Domain("N must be at least 1"));
    }
    if w.is_nan() || w < 0.0 {
        return Err(ModelError::Domain("W must be non-negative"));
    }
    if m < 1 {
        return Err(ModelError::Domain("m must be at least 1"));
    }
    if w >= n {
        return Ok(1.0);
    }
    Ok(1.0 - (1.0 - w / n).powi(m as i32))
}

/// Smallest `m` whose discovery probability reaches `p_target`.
pub fn required_queries(n: f64, w: f64, p_target: f64) -> Result<u32, ModelError> {
    if p_target.is_nan() || p_target <= 0.0 || p_target >= 1.0 {
        return Err(ModelError::Domain("target probability must be in (0, 1)"));
    }
    if w >= n {
        discovery_probability(n, w, 1)?;
        return Ok(1);
    }
    if w.is_nan() || w <= 0.0 {
        return Err(ModelError::Domain("W must be positive to reach a target"));
    }
    // closed form as a starting guess, then settle on the exact boundary
    let miss = 1.0 - w / n;
    let guess = ((1.0 - p_target).ln() / miss.ln()).ceil().max(1.0) as u32;
    let mut m = guess.saturating_sub(1).max(1);
    while discovery_probability(n, w, m)? < p_target {
        m += 1;
    }
    while m > 1 && discovery_probability(n, w, m - 1)? >= p_target {
        m -= 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryModel {
    /// Assumed upper bound on concurrent swarm population.
    pub n: f64,
    /// Peers per tracker reply.
    pub w: f64,
    pub p_target: f64,
    pub inter_query: Seconds,
    /// Replaces the derived threshold when set.
    pub threshold_override: Option<Seconds>,
}

impl Default for DiscoveryModel {
    fn default() -> Self {
        Self {
            n: 165.0,
            w: 50.0,
            p_target: 0.99,
            inter_query: 18 * MINUTE,
            threshold_override: None,
        }
    }
}

impl DiscoveryModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.w.is_nan() || self.w <= 0.0 {
            return Err(ModelError::Domain("W must be positive"));
        }
        if self.inter_query <= 0 {
            return Err(ModelError::Domain("inter-query time must be positive"));
        }
        if matches!(self.threshold_override, Some(t) if t <= 0) {
            return Err(ModelError::Domain("threshold must be positive"));
        }
        required_queries(self.n, self.w, self.p_target).map(|_| ())
    }

    pub fn m(&self) -> u32 {
        required_queries(self.n, self.w, self.p_target).expect("model validated")
    }

    pub fn offline_threshold(&self) -> Seconds {
        self.threshold_override
            .unwrap_or_else(|| offline_threshold(self.m(), self.inter_query))
    }
}

/// `m` query spacings rounded up to the next whole hour.
pub fn offline_threshold(m: u32, inter_query: Seconds) -> Seconds {
    let raw = m as i64 * inter_query;
    (raw + HOUR - 1).div_euclid(HOUR) * HOUR
}

/// Parses comma-separated overrides such as `N=165,W=50,P=0.99,dt=18m,threshold=2h`.
impl FromStr for DiscoveryModel {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut m = DiscoveryModel::default();
        let bad = || ModelError::Override(s.to_owned());
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(bad)?;
            match k.trim() {
                "N" | "n" => m.n = v.parse().map_err(|_| bad())?,
                "W" | "w" => m.w = v.parse().map_err(|_| bad())?,
                "P" | "p" => m.p_target = v.parse().map_err(|_| bad())?,
                "dt" | "inter_query" => m.inter_query = parse_duration(v).ok_or_else(bad)?,
                "threshold" => m.threshold_override = Some(parse_duration(v).ok_or_else(bad)?),
                _ => return Err(bad()),
            }
        }
        m.validate()?;
        Ok(m)
    }
}

impl fmt::Display for DiscoveryModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "N={},W={},P={},dt={}s",
            self.n, self.w, self.p_target, self.inter_query
        )?;
        if let Some(t) = self.threshold_override {
            write!(f, ",threshold={t}s")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub publisher_id: String,
    pub infohash: InfoHash,
    pub start: UnixTime,
    pub end: UnixTime,
    pub observation_count: u64,
}

impl SessionRecord {
    pub fn duration(&self) -> Seconds {
        self.end - self.start
    }
}

/// Splits sorted sighting times into sessions: a gap of at least `threshold`
/// starts a new one. Sessions span first to last sighting, unpadded.
pub fn reconstruct_sessions(
    publisher_id: &str,
    infohash: InfoHash,
    observations: &[UnixTime],
    threshold: Seconds,
) -> Vec<SessionRecord> {
    assert!(threshold > 0, "threshold must be positive");
    debug_assert!(observations.windows(2).all(|w| w[0] <= w[1]), "observations unsorted");
    let mut out: Vec<SessionRecord> = Vec::new();
    for &t in observations {
        match out.last_mut() {
            Some(s) if t - s.end < threshold => {
                s.end = t;
                s.observation_count += 1;
            }
            _ => out.push(SessionRecord {
                publisher_id: publisher_id.to_owned(),
                infohash,
                start: t,
                end: t,
                observation_count: 1,
            }),
        }
    }
    out
}

/// Total time the publisher seeded one torrent.
pub fn seeding_time(sessions: &[SessionRecord]) -> Seconds {
    sessions.iter().map(SessionRecord::duration).sum()
}

/// Measure of the union of all intervals.
pub fn aggregated_session_time(sessions: &[SessionRecord]) -> Seconds {
    let mut iv: Vec<(UnixTime, UnixTime)> = sessions.iter().map(|s| (s.start, s.end)).collect();
    iv.sort_unstable();
    let mut total = 0;
    let mut cur: Option<(UnixTime, UnixTime)> = None;
    for (a, b) in iv {
        match &mut cur {
            Some((_, e)) if a <= *e => *e = (*e).max(b),
            _ => {
                if let Some((s, e)) = cur {
                    total += e - s;
                }
                cur = Some((a, b));
            }
        }
    }
    if let Some((s, e)) = cur {
        total += e - s;
    }
    total
}

/// Tick indices covered by `[start, end)`: ticks `k` with `k*tick` inside the
/// interval. A zero-length session covers the tick containing its start.
fn tick_span(start: UnixTime, end: UnixTime, tick: Seconds) -> (i64, i64) {
    let first = start.div_euclid(tick) + i64::from(start.rem_euclid(tick) != 0);
    let last = (end - 1).div_euclid(tick);
    if end <= start || first > last {
        let k = start.div_euclid(tick);
        (k, k)
    } else {
        (first, last)
    }
}

/// Average number of torrents seeded at once, sampled every `tick` over the
/// ticks where at least one torrent is seeded. Each torrent counts at most once
/// per tick.
pub fn parallel_torrents(sessions: &[SessionRecord], tick: Seconds) -> f64 {
    assert!(tick > 0, "tick must be positive");
    // per torrent, merge overlapping tick ranges so a torrent counts once
    let mut by_torrent: Vec<(InfoHash, i64, i64)> = sessions
        .iter()
        .map(|s| {
            let (a, b) = tick_span(s.start, s.end, tick);
            (s.infohash, a, b)
        })
        .collect();
    by_torrent.sort_unstable();
    let mut deltas: Vec<(i64, i64)> = Vec::with_capacity(by_torrent.len() * 2);
    let mut i = 0;
    while i < by_torrent.len() {
        let (ih, mut a, mut b) = by_torrent[i];
        i += 1;
        while i < by_torrent.len() && by_torrent[i].0 == ih {
            let (_, c, d) = by_torrent[i];
            if c <= b + 1 {
                b = b.max(d);
            } else {
                deltas.push((a, 1));
                deltas.push((b + 1, -1));
                a = c;
                b = d;
            }
            i += 1;
        }
        deltas.push((a, 1));
        deltas.push((b + 1, -1));
    }
    deltas.sort_unstable();
    let (mut sum, mut covered, mut level) = (0i64, 0i64, 0i64);
    let mut prev = None;
    for (t, d) in deltas {
        if let Some(p) = prev {
            if level > 0 {
                sum += level * (t - p);
                covered += t - p;
            }
        }
        level += d;
        prev = Some(t);
    }
    if covered == 0 {
        0.0
    } else {
        sum as f64 / covered as f64
    }
}

/// Per-publisher seeding metrics over all its torrents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedingMetrics {
    /// Mean per-torrent seeding time over torrents with at least one session.
    pub avg_seeding_time: f64,
    pub parallel_torrents: f64,
    pub aggregated_session_time: Seconds,
}

pub fn seeding_metrics(per_torrent: &[Vec<SessionRecord>], tick: Seconds) -> Option<SeedingMetrics> {
    let seeded: Vec<&Vec<SessionRecord>> = per_torrent.iter().filter(|s| !s.is_empty()).collect();
    if seeded.is_empty() {
        return None;
    }
    let all: Vec<SessionRecord> = seeded.iter().flat_map(|s| s.iter().cloned()).collect();
    let total: Seconds = seeded.iter().map(|s| seeding_time(s)).sum();
    Some(SeedingMetrics {
        avg_seeding_time: total as f64 / seeded.len() as f64,
        parallel_torrents: parallel_torrents(&all, tick),
        aggregated_session_time: aggregated_session_time(&all),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(ih: u8, a: i64, b: i64) -> SessionRecord {
        SessionRecord {
            publisher_id: "p".into(),
            infohash: InfoHash([ih; 20]),
            start: a * MINUTE,
            end: b * MINUTE,
            observation_count: 1,
        }
    }

    #[test]
    fn probability_examples() {
        let p = discovery_probability(165.0, 50.0, 13).unwrap();
        assert!(p > 0.9908 && p < 0.9909, "{p}");
        assert_eq!(discovery_probability(100.0, 100.0, 1).unwrap(), 1.0);
        assert_eq!(discovery_probability(200.0, 50.0, 1).unwrap(), 0.25);
        assert!(discovery_probability(0.0, 1.0, 1).is_err());
        assert!(discovery_probability(10.0, -1.0, 1).is_err());
    }

    #[test]
    fn required_queries_examples() {
        assert_eq!(required_queries(165.0, 50.0, 0.99).unwrap(), 13);
        assert_eq!(required_queries(100.0, 100.0, 0.999).unwrap(), 1);
        assert_eq!(required_queries(200.0, 50.0, 0.99).unwrap(), 17);
    }

    #[test]
    fn thresholds() {
        assert_eq!(DiscoveryModel::default().offline_threshold(), 4 * HOUR);
        assert_eq!(offline_threshold(1, 18 * MINUTE), HOUR);
        assert_eq!(offline_threshold(10, 6 * MINUTE), HOUR);
        let m: DiscoveryModel = "threshold=2h".parse().unwrap();
        assert_eq!(m.offline_threshold(), 2 * HOUR);
        let m: DiscoveryModel = "N=165,W=50,P=0.99,dt=18m,threshold=6h".parse().unwrap();
        assert_eq!(m.offline_threshold(), 6 * HOUR);
        assert!("N=165,bogus=1".parse::<DiscoveryModel>().is_err());
        assert!("P=1.5".parse::<DiscoveryModel>().is_err());
    }

    #[test]
    fn reconstruct_gap_rule() {
        let obs: Vec<i64> = [0, 10, 20, 300].iter().map(|m| m * MINUTE).collect();
        let ss = reconstruct_sessions("p", InfoHash([0; 20]), &obs, 240 * MINUTE);
        let spans: Vec<_> = ss
            .iter()
            .map(|s| (s.start / MINUTE, s.end / MINUTE, s.observation_count))
            .collect();
        assert_eq!(spans, vec![(0, 20, 3), (300, 300, 1)]);
        let one = reconstruct_sessions("p", InfoHash([0; 20]), &[5], 10);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].duration(), 0);
    }

    #[test]
    fn seeding_and_union() {
        assert_eq!(seeding_time(&[s(1, 0, 20), s(1, 300, 310)]), 30 * MINUTE);
        assert_eq!(seeding_time(&[]), 0);
        assert_eq!(aggregated_session_time(&[s(1, 0, 100), s(2, 50, 150)]), 150 * MINUTE);
        assert_eq!(aggregated_session_time(&[s(1, 0, 10), s(2, 20, 30)]), 20 * MINUTE);
    }

    #[test]
    fn parallel_examples() {
        let p = parallel_torrents(&[s(1, 0, 100), s(2, 50, 150)], MINUTE);
        assert!((p - 200.0 / 150.0).abs() < 1e-12);
        assert_eq!(parallel_torrents(&[s(1, 0, 100)], MINUTE), 1.0);
        assert_eq!(parallel_torrents(&[s(1, 7, 7)], MINUTE), 1.0);
        // the same torrent twice at once still counts once
        assert_eq!(parallel_torrents(&[s(1, 0, 100), s(1, 50, 60)], MINUTE), 1.0);
    }
}
