use std::collections::BTreeSet;

use proptest::prelude::*;
use seedscope_core::session::{
    aggregated_session_time, discovery_probability, offline_threshold, parallel_torrents, reconstruct_sessions,
    required_queries, seeding_time, DiscoveryModel, SessionRecord,
};
use seedscope_core::time::{HOUR, MINUTE};
use seedscope_core::InfoHash;

fn ih(i: u8) -> InfoHash {
    InfoHash([i; 20])
}

// Ticks a session occupies: multiples of `tick` in [start, end), or the tick
// at or below start when there is none.
fn ticks_of(s: &SessionRecord, tick: i64) -> Vec<i64> {
    let v: Vec<i64> = (s.start..s.end)
        .filter(|t| t.rem_euclid(tick) == 0)
        .map(|t| t / tick)
        .collect();
    if v.is_empty() {
        vec![s.start.div_euclid(tick)]
    } else {
        v
    }
}

fn parallel_oracle(sessions: &[SessionRecord], tick: i64) -> f64 {
    let occupied: BTreeSet<(i64, InfoHash)> = sessions
        .iter()
        .flat_map(|s| ticks_of(s, tick).into_iter().map(move |k| (k, s.infohash)))
        .collect();
    let ticks: BTreeSet<i64> = occupied.iter().map(|(k, _)| *k).collect();
    if ticks.is_empty() {
        0.0
    } else {
        occupied.len() as f64 / ticks.len() as f64
    }
}

fn union_oracle(sessions: &[SessionRecord]) -> i64 {
    // unit-second coverage
    let covered: BTreeSet<i64> = sessions.iter().flat_map(|s| s.start..s.end).collect();
    covered.len() as i64
}

// Per-torrent sessions as reconstruction produces them: disjoint and ordered.
fn sessions_strategy() -> impl Strategy<Value = Vec<SessionRecord>> {
    prop::collection::btree_map(0u8..6, (prop::collection::vec(0i64..3000, 1..8), 1i64..400), 0..6).prop_map(|v| {
        v.into_iter()
            .flat_map(|(t, (mut obs, threshold))| {
                obs.sort_unstable();
                reconstruct_sessions("p", ih(t), &obs, threshold)
            })
            .collect()
    })
}

#[test]
fn thirteen_queries_at_default_parameters() {
    assert_eq!(required_queries(165.0, 50.0, 0.99), Ok(13));
    let p = discovery_probability(165.0, 50.0, 13).unwrap();
    assert!((p - 0.9908424215077457).abs() < 1e-15);
    assert!(discovery_probability(165.0, 50.0, 12).unwrap() < 0.99);
    assert_eq!(DiscoveryModel::default().offline_threshold(), 4 * HOUR);
}

#[test]
fn threshold_rounds_up_to_the_hour() {
    assert_eq!(offline_threshold(13, 18 * MINUTE), 4 * HOUR);
    assert_eq!(offline_threshold(10, 6 * MINUTE), HOUR);
    assert_eq!(offline_threshold(10, 6 * MINUTE + 1), 2 * HOUR);
}

#[test]
fn model_overrides_parse() {
    let m: DiscoveryModel = "N=165,W=50,P=0.99,dt=18m".parse().unwrap();
    assert_eq!(m, DiscoveryModel::default());
    let m: DiscoveryModel = "W=25".parse().unwrap();
    assert_eq!(m.m(), required_queries(165.0, 25.0, 0.99).unwrap());
    assert!("W=0".parse::<DiscoveryModel>().is_err());
    assert!("P=1".parse::<DiscoveryModel>().is_err());
    assert!("Q=3".parse::<DiscoveryModel>().is_err());
    let m: DiscoveryModel = "threshold=2h".parse().unwrap();
    assert_eq!(m.offline_threshold(), 2 * HOUR);
}

#[test]
fn gap_equal_to_threshold_splits() {
    let s = reconstruct_sessions("p", ih(1), &[0, 100, 200 + 4 * HOUR], 4 * HOUR - 100);
    assert_eq!(s.len(), 2);
    let s = reconstruct_sessions("p", ih(1), &[0, 100, 99 + 4 * HOUR], 4 * HOUR);
    assert_eq!(s.len(), 1);
    assert_eq!((s[0].start, s[0].end), (0, 99 + 4 * HOUR));
}

proptest! {
    #[test]
    fn probability_monotone(n in 1.0f64..2000.0, w in 0.0f64..500.0, m in 1u32..200) {
        let p = discovery_probability(n, w, m).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(discovery_probability(n, w, m + 1).unwrap() >= p);
        prop_assert!(discovery_probability(n, w + 1.0, m).unwrap() >= p);
        prop_assert!(discovery_probability(n + 1.0, w, m).unwrap() <= p);
    }

    #[test]
    fn inverse_consistent(n in 1.0f64..2000.0, w in 0.5f64..500.0, m in 1u32..300) {
        let p = discovery_probability(n, w, m).unwrap();
        prop_assume!(p > 0.0 && p < 1.0);
        prop_assert!(required_queries(n, w, p).unwrap() <= m);
    }

    #[test]
    fn required_is_minimal(n in 1.0f64..2000.0, w in 0.5f64..500.0, p in 0.01f64..0.999) {
        let m = required_queries(n, w, p).unwrap();
        prop_assert!(discovery_probability(n, w, m).unwrap() >= p);
        if m > 1 {
            prop_assert!(discovery_probability(n, w, m - 1).unwrap() < p);
        }
    }

    #[test]
    fn sessions_cover_observations(
        mut obs in prop::collection::vec(0i64..100_000, 0..60),
        threshold in 1i64..20_000,
    ) {
        obs.sort_unstable();
        let s = reconstruct_sessions("p", ih(1), &obs, threshold);
        prop_assert_eq!(s.iter().map(|r| r.observation_count).sum::<u64>(), obs.len() as u64);
        let mut i = 0;
        for r in &s {
            prop_assert!(r.start <= r.end);
            let mine = &obs[i..i + r.observation_count as usize];
            prop_assert_eq!(mine[0], r.start);
            prop_assert_eq!(*mine.last().unwrap(), r.end);
            prop_assert!(mine.windows(2).all(|w| w[1] - w[0] < threshold));
            i += r.observation_count as usize;
        }
        prop_assert!(s.windows(2).all(|w| w[1].start - w[0].end >= threshold));
    }

    #[test]
    fn aggregated_between_max_and_sum(sessions in sessions_strategy()) {
        let agg = aggregated_session_time(&sessions);
        prop_assert_eq!(agg, union_oracle(&sessions));
        let mut per_torrent = std::collections::BTreeMap::<InfoHash, Vec<SessionRecord>>::new();
        for s in &sessions {
            per_torrent.entry(s.infohash).or_default().push(s.clone());
        }
        let times: Vec<i64> = per_torrent.values().map(|v| seeding_time(v)).collect();
        prop_assert!(agg >= times.iter().copied().max().unwrap_or(0));
        prop_assert!(agg <= times.iter().sum::<i64>());
    }

    #[test]
    fn parallel_matches_tick_scan(sessions in sessions_strategy(), tick in 1i64..120) {
        let got = parallel_torrents(&sessions, tick);
        let want = parallel_oracle(&sessions, tick);
        prop_assert!((got - want).abs() < 1e-9, "got {} want {}", got, want);
        if !sessions.is_empty() {
            let distinct: BTreeSet<InfoHash> = sessions.iter().map(|s| s.infohash).collect();
            prop_assert!(got >= 1.0 && got <= distinct.len() as f64);
        }
    }
}
