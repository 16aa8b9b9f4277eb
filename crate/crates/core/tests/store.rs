use std::io::Write;
use std::net::{Ipv4Addr, SocketAddr, SocketAddrV4};

use proptest::prelude::*;
use seedscope_core::monitor::SwarmSnapshot;
use seedscope_core::store::{
    export, import, read_log, EventBody, EventKind, EventLog, EventSink, ExportFormat, PortalRemoval, SyncPolicy,
};
use seedscope_core::InfoHash;

fn snapshot(i: u8, at: i64, peers: &[(u32, u16)]) -> EventBody {
    let peers: Vec<SocketAddr> = peers
        .iter()
        .map(|&(ip, port)| SocketAddr::V4(SocketAddrV4::new(Ipv4Addr::from(ip), port)))
        .collect();
    EventBody::Snapshot(SwarmSnapshot {
        infohash: InfoHash([i; 20]),
        observed_at: at,
        vantage_id: format!("v{}", i % 3),
        seeders: peers.len() as u32 / 2,
        leechers: peers.len() as u32 - peers.len() as u32 / 2,
        empty: peers.is_empty(),
        peers,
    })
}

fn body() -> impl Strategy<Value = EventBody> {
    prop_oneof![
        (
            0u8..4,
            0i64..100_000,
            prop::collection::vec((any::<u32>(), 1u16..=65535), 0..5)
        )
            .prop_map(|(i, at, p)| snapshot(i, at, &p)),
        "[a-z]{1,8}( [a-z,\"]{0,4})?".prop_map(|u| EventBody::PortalRemoval(PortalRemoval {
            portal_id: "p".into(),
            username: u,
        })),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn reopened_log_keeps_write_order(batches in prop::collection::vec(prop::collection::vec(body(), 0..10), 1..4)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let mut written = Vec::new();
        for (i, batch) in batches.iter().enumerate() {
            let log = EventLog::open(&path, if i % 2 == 0 { SyncPolicy::EveryAppend } else { SyncPolicy::Batched }).unwrap();
            for (j, b) in batch.iter().enumerate() {
                let seq = log.append((i * 100 + j) as i64, b.clone()).unwrap();
                prop_assert_eq!(seq, written.len() as u64);
                written.push(b.clone());
            }
        }
        let back = read_log(&path).unwrap();
        prop_assert_eq!(back.iter().map(|r| r.body.clone()).collect::<Vec<_>>(), written);
        prop_assert!(back.iter().enumerate().all(|(i, r)| r.seq == i as u64 && r.v == 1));
        // every line carries its own kind and version
        let text = std::fs::read_to_string(&path).unwrap();
        for (line, rec) in text.lines().zip(&back) {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            prop_assert_eq!(&v["v"], 1);
            prop_assert_eq!(v["kind"].as_str(), Some(rec.body.kind().as_str()));
        }
    }

    #[test]
    fn export_import_round_trip(bodies in prop::collection::vec(body(), 0..30)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.jsonl");
        let log = EventLog::create(&path, SyncPolicy::Batched).unwrap();
        for (i, b) in bodies.into_iter().enumerate() {
            log.append(i as i64, b).unwrap();
        }
        drop(log);
        let records = read_log(&path).unwrap();
        for (format, name) in [(ExportFormat::Jsonl, "j"), (ExportFormat::Csv, "c")] {
            let out = dir.path().join(name);
            export(&records, format, None, &out).unwrap();
            prop_assert_eq!(&import(&out).unwrap(), &records);
        }
    }
}

#[test]
fn torn_tail_is_dropped_on_open() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    {
        let log = EventLog::create(&path, SyncPolicy::EveryAppend).unwrap();
        log.append(1, snapshot(1, 1, &[])).unwrap();
        log.append(2, snapshot(1, 2, &[(1, 2)])).unwrap();
    }
    std::fs::OpenOptions::new()
        .append(true)
        .open(&path)
        .unwrap()
        .write_all(br#"{"v":1,"seq":2,"ts":3,"ki"#)
        .unwrap();
    assert_eq!(read_log(&path).unwrap().len(), 2);
    let log = EventLog::open(&path, SyncPolicy::EveryAppend).unwrap();
    assert_eq!(log.append(4, snapshot(1, 4, &[])).unwrap(), 2);
    drop(log);
    let back = read_log(&path).unwrap();
    assert_eq!(back.iter().map(|r| r.ts).collect::<Vec<_>>(), vec![1, 2, 4]);
}

#[test]
fn invalid_events_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let log = EventLog::create(dir.path().join("e.jsonl"), SyncPolicy::Batched).unwrap();
    let mut bad = snapshot(1, 1, &[(1, 2)]);
    if let EventBody::Snapshot(s) = &mut bad {
        s.empty = true;
    }
    assert!(log.append(1, bad).is_err());
}

#[test]
fn export_filters_by_kind() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let log = EventLog::create(&path, SyncPolicy::Batched).unwrap();
    log.append(1, snapshot(1, 1, &[])).unwrap();
    log.append(
        2,
        EventBody::PortalRemoval(PortalRemoval {
            portal_id: "p".into(),
            username: "u".into(),
        }),
    )
    .unwrap();
    drop(log);
    let records = read_log(&path).unwrap();
    let kinds = [EventKind::PortalRemoval].into_iter().collect();
    let out = dir.path().join("x");
    export(&records, ExportFormat::Csv, Some(&kinds), &out).unwrap();
    let back = import(&out).unwrap();
    assert_eq!(back.len(), 1);
    assert_eq!(back[0].body.kind(), EventKind::PortalRemoval);
}
