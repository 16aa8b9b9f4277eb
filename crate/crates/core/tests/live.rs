//! The live pipeline against an in-process portal and tracker, on a manual clock.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::AtomicBool;
use std::sync::{Arc, Mutex};

use seedscope_core::ingest::{render_feed, FeedItem, PortalProfile, RetryPolicy};
use seedscope_core::monitor::{run_live, LiveDeps, LiveOptions, MonitorConfig, NoIpReason, TerminalOutcome};
use seedscope_core::peer_wire::{ProbeOutcome, ProbeResult, Prober};
use seedscope_core::store::{EventBody, MemorySink};
use seedscope_core::time::{Clock, ManualClock};
use seedscope_core::tracker::{encode_announce_response, parse_announce_query, RateLimiter, Vantage};
use seedscope_core::transport::{Transport, TransportError};
use seedscope_core::InfoHash;

const FEED: &str = "http://portal.test/rss";

struct Portal {
    profile: PortalProfile,
    items: Vec<FeedItem>,
    clock: Arc<ManualClock>,
    announces: Mutex<Vec<(i64, Vec<u8>, InfoHash)>>,
}

impl Transport for Portal {
    fn get(&self, url: &str) -> Result<Vec<u8>, TransportError> {
        if url == FEED {
            return Ok(render_feed(&self.profile, &self.items).into_bytes());
        }
        if let Some(name) = url.strip_prefix("http://portal.test/t/") {
            let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name);
            return std::fs::read(path).map_err(|_| TransportError::Status(404));
        }
        // every announce: an empty swarm
        let q = parse_announce_query(url).ok_or(TransportError::Status(400))?;
        self.announces
            .lock()
            .unwrap()
            .push((self.clock.now(), q.peer_id, q.infohash));
        Ok(encode_announce_response(0, 0, 1800, &[]))
    }
}

struct Refuse;

impl Prober for Refuse {
    fn probe(&self, endpoint: SocketAddr, _: InfoHash, _: u64) -> ProbeResult {
        ProbeResult {
            endpoint,
            outcome: ProbeOutcome::Refused,
            pieces_have: None,
            probed_at: 0,
        }
    }
}

fn item(file: &str, user: &str) -> FeedItem {
    FeedItem {
        portal_id: "test".into(),
        title: file.into(),
        category: "Video".into(),
        subcategory: String::new(),
        username: user.into(),
        content_size: 1,
        torrent_url: format!("http://portal.test/t/{file}"),
        published_at: 1_000_000,
        description: String::new(),
    }
}

#[test]
fn live_run_monitors_each_item_once() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("state.json");
    let clock = Arc::new(ManualClock::new(1_000_000));
    let profile = PortalProfile {
        portal_id: "test".into(),
        feed_url: FEED.into(),
        ..PortalProfile::default()
    };
    let portal = Arc::new(Portal {
        profile: profile.clone(),
        items: vec![
            item("single_seed.torrent", "alice"),
            item("multi_file.torrent", "bob"),
            item("missing.torrent", "carol"),
        ],
        clock: clock.clone(),
        announces: Mutex::new(Vec::new()),
    });
    let sink = Arc::new(MemorySink::default());
    let opts = LiveOptions {
        profile,
        monitor: MonitorConfig {
            vantages: vec![Vantage::new("v0", 6881), Vantage::new("v1", 6882)],
            ..MonitorConfig::default()
        },
        retry: RetryPolicy {
            attempts: 2,
            backoff: 1,
        },
        state_path: Some(state.clone()),
        max_polls: Some(3),
    };
    let deps = LiveDeps {
        transport: portal.clone(),
        clock: clock.clone(),
        prober: Arc::new(Refuse),
        limiter: Arc::new(RateLimiter::default()),
        sink: sink.clone(),
    };
    let first = run_live(&opts, &deps, Arc::new(AtomicBool::new(false))).unwrap();
    assert_eq!((first.polls, first.items, first.swarms_finished), (3, 3, 3));
    // a restart with the saved state sees nothing new
    let second = run_live(&opts, &deps, Arc::new(AtomicBool::new(false))).unwrap();
    assert_eq!(second.items, 0);

    let events = sink.records();
    let mut feed = 0;
    let mut failed = 0;
    let mut terminal: BTreeMap<InfoHash, Vec<_>> = BTreeMap::new();
    let mut snaps: BTreeMap<InfoHash, Vec<i64>> = BTreeMap::new();
    for e in &events {
        match &e.body {
            EventBody::FeedItem(f) => {
                feed += 1;
                failed += f.failure.is_some() as usize;
            }
            EventBody::Identification(i) => {
                assert_eq!(i.ip, None);
                assert_eq!(i.reason_no_ip, Some(NoIpReason::NoSeedReported));
            }
            EventBody::Snapshot(s) => snaps.entry(s.infohash).or_default().push(s.observed_at),
            EventBody::TerminalStatus(t) => terminal.entry(t.infohash).or_default().push(t.clone()),
            _ => {}
        }
    }
    assert_eq!((feed, failed), (3, 1));
    assert_eq!(terminal.len(), 2);
    for (ih, ts) in &terminal {
        assert_eq!(ts.len(), 1);
        assert_eq!(ts[0].outcome, TerminalOutcome::Completed);
        assert_eq!(ts[0].snapshots, 10);
        assert!(snaps[ih].windows(2).all(|w| w[0] <= w[1]));
    }

    // per vantage and swarm, announces are spaced by the limiter
    let mut last: BTreeMap<(Vec<u8>, InfoHash), i64> = BTreeMap::new();
    for (at, peer, ih) in portal.announces.lock().unwrap().iter() {
        if let Some(prev) = last.insert((peer.clone(), *ih), *at) {
            assert!(at - prev >= 600, "gap {}", at - prev);
        }
    }
}
