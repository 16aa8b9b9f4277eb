use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::event::{EventBody, EventKind, EventRecord};
use super::log::{read_log, StoreError};
use crate::monitor::TerminalOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Jsonl,
    Csv,
}

impl FromStr for ExportFormat {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(ExportFormat::Jsonl),
            "csv" => Ok(ExportFormat::Csv),
            other => Err(StoreError::UnknownFormat(other.to_owned())),
        }
    }
}

pub const JSONL_FILE: &str = "events.jsonl";

/// Leading columns of every CSV export. `data` (last column) holds the JSON
/// payload so CSV exports can be imported without loss.
const COMMON: [&str; 4] = ["v", "seq", "ts", "kind"];

/// Kind-specific columns between the common ones and `data`.
pub fn csv_columns(kind: EventKind) -> &'static [&'static str] {
    match kind {
        EventKind::FeedItem => &[
            "portal_id",
            "username",
            "title",
            "category",
            "subcategory",
            "content_size",
            "published_at",
            "torrent_url",
            "infohash",
            "fetch_error",
        ],
        EventKind::Identification => &["infohash", "username", "ip", "method", "reason_no_ip"],
        EventKind::Snapshot => &["infohash", "vantage_id", "seeders", "leechers", "peer_count", "empty"],
        EventKind::Probe => &["infohash", "endpoint", "outcome", "pieces_have"],
        EventKind::PortalRemoval => &["portal_id", "username"],
        EventKind::TerminalStatus => &["infohash", "outcome", "snapshots", "started_at", "ended_at"],
    }
}

fn snake<T: serde::Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

fn flat(body: &EventBody) -> Vec<String> {
    let opt = |o: Option<String>| o.unwrap_or_default();
    match body {
        EventBody::FeedItem(f) => vec![
            f.item.portal_id.clone(),
            f.item.username.clone(),
            f.item.title.clone(),
            f.item.category.clone(),
            f.item.subcategory.clone(),
            f.item.content_size.to_string(),
            f.item.published_at.to_string(),
            f.item.torrent_url.clone(),
            opt(f.torrent.as_ref().map(|t| t.infohash.to_hex())),
            opt(f.failure.as_ref().map(|e| e.to_string())),
        ],
        EventBody::Identification(i) => vec![
            i.infohash.to_hex(),
            i.username.clone(),
            opt(i.ip.map(|ip| ip.to_string())),
            snake(&i.method),
            opt(i.reason_no_ip.map(|r| snake(&r))),
        ],
        EventBody::Snapshot(s) => vec![
            s.infohash.to_hex(),
            s.vantage_id.clone(),
            s.seeders.to_string(),
            s.leechers.to_string(),
            s.peers.len().to_string(),
            s.empty.to_string(),
        ],
        EventBody::Probe(p) => vec![
            p.infohash.to_hex(),
            p.result.endpoint.to_string(),
            snake(&p.result.outcome),
            opt(p.result.pieces_have.map(|n| n.to_string())),
        ],
        EventBody::PortalRemoval(r) => vec![r.portal_id.clone(), r.username.clone()],
        EventBody::TerminalStatus(t) => vec![
            t.infohash.to_hex(),
            match t.outcome {
                TerminalOutcome::Completed => "completed".into(),
                TerminalOutcome::Aborted => "aborted".into(),
            },
            t.snapshots.to_string(),
            t.started_at.to_string(),
            t.ended_at.to_string(),
        ],
    }
}

fn payload(rec: &EventRecord) -> String {
    // the record's own serialization, minus the envelope
    let v: serde_json::Value = serde_json::to_value(rec).expect("events serialize");
    v.get("data").map(|d| d.to_string()).unwrap_or_default()
}

/// Writes `records` (optionally restricted to `kinds`) into `dir`.
///
/// `jsonl` produces `events.jsonl`, one record per line exactly as in the
/// log. `csv` produces one `<kind>.csv` per selected kind with the columns
/// `v,seq,ts,kind`, the kind's [`csv_columns`], then `data`. Output depends
/// only on the input records.
pub fn export(
    records: &[EventRecord],
    format: ExportFormat,
    kinds: Option<&BTreeSet<EventKind>>,
    dir: &Path,
) -> Result<Vec<PathBuf>, StoreError> {
    fs::create_dir_all(dir)?;
    let selected: Vec<EventKind> = EventKind::ALL
        .into_iter()
        .filter(|k| kinds.is_none_or(|ks| ks.contains(k)))
        .collect();
    let keep = |r: &&EventRecord| selected.contains(&r.body.kind());
    match format {
        ExportFormat::Jsonl => {
            let mut out = Vec::new();
            for r in records.iter().filter(keep) {
                serde_json::to_writer(&mut out, r).expect("events serialize");
                out.push(b'\n');
            }
            let p = dir.join(JSONL_FILE);
            fs::write(&p, out)?;
            Ok(vec![p])
        }
        ExportFormat::Csv => {
            let mut paths = Vec::new();
            for kind in selected {
                let mut w = csv::Writer::from_writer(Vec::new());
                let mut header: Vec<&str> = COMMON.to_vec();
                header.extend_from_slice(csv_columns(kind));
                header.push("data");
                w.write_record(&header).map_err(csv_err)?;
                for r in records.iter().filter(|r| r.body.kind() == kind) {
                    let mut row = vec![
                        r.v.to_string(),
                        r.seq.to_string(),
                        r.ts.to_string(),
                        kind.as_str().to_owned(),
                    ];
                    row.extend(flat(&r.body));
                    row.push(payload(r));
                    w.write_record(&row).map_err(csv_err)?;
                }
                let p = dir.join(format!("{}.csv", kind.as_str()));
                fs::write(&p, w.into_inner().map_err(|e| StoreError::Io(e.into_error()))?)?;
                paths.push(p);
            }
            Ok(paths)
        }
    }
}

fn csv_err(e: csv::Error) -> StoreError {
    StoreError::Corrupt {
        line: e.position().map_or(0, |p| p.line() as usize),
        message: e.to_string(),
    }
}

/// Reads records back from a log file, an exported `.jsonl` or `.csv`
/// file, or an export directory. Records are returned in sequence order.
pub fn import(path: &Path) -> Result<Vec<EventRecord>, StoreError> {
    if path.is_dir() {
        let jsonl = path.join(JSONL_FILE);
        if jsonl.exists() {
            return read_log(jsonl);
        }
        let mut all = Vec::new();
        for kind in EventKind::ALL {
            let p = path.join(format!("{}.csv", kind.as_str()));
            if p.exists() {
                all.extend(import_csv(&p)?);
            }
        }
        all.sort_by_key(|r| r.seq);
        return Ok(all);
    }
    if path.extension().is_some_and(|e| e == "csv") {
        return import_csv(path);
    }
    read_log(path)
}

fn import_csv(path: &Path) -> Result<Vec<EventRecord>, StoreError> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| StoreError::Corrupt {
                line: 1,
                message: format!("missing column `{name}`"),
            })
    };
    let (v, seq, ts, kind, data) = (col("v")?, col("seq")?, col("ts")?, col("kind")?, col("data")?);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let line = i + 2;
        let envelope = format!(
            r#"{{"v":{},"seq":{},"ts":{},"kind":"{}","data":{}}}"#,
            &row[v], &row[seq], &row[ts], &row[kind], &row[data]
        );
        let rec: EventRecord = serde_json::from_str(&envelope).map_err(|e| StoreError::Corrupt {
            line,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}
