use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::net::Ipv4Addr;

use seedscope_core::analytics::BusinessClass;
use seedscope_core::time::UnixTime;
use seedscope_core::InfoHash;
use serde::{Deserialize, Serialize};

use crate::config::Role;
use crate::world::Shape;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthPublisher {
    pub username: String,
    pub role: Role,
    pub ips: Vec<Ipv4Addr>,
    pub nat: bool,
    pub business_class: Option<BusinessClass>,
    pub site: Option<String>,
    pub removed_at: Option<UnixTime>,
    pub torrents: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTorrent {
    pub infohash: InfoHash,
    pub username: String,
    pub publisher_ip: Ipv4Addr,
    pub nat: bool,
    pub published_at: UnixTime,
    /// Arrival of the first peer.
    pub birth: UnixTime,
    /// Departure of the last peer.
    pub end: UnixTime,
    pub shape: Shape,
    pub category: String,
    /// Publisher seeding sessions as `[start, end)`.
    pub sessions: Vec<(UnixTime, UnixTime)>,
    /// Every non-publisher peer that ever joined, sorted.
    pub downloaders: Vec<Ipv4Addr>,
}

/// What the simulated world really was, for comparison with the pipeline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub publishers: Vec<TruthPublisher>,
    pub torrents: Vec<TruthTorrent>,
}

/// Events a simulation run appended, by kind.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub events: BTreeMap<String, u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Publisher(TruthPublisher),
    Torrent(TruthTorrent),
    Run(RunCounts),
}

impl GroundTruth {
    pub fn publisher(&self, username: &str) -> Option<&TruthPublisher> {
        self.publishers.iter().find(|p| p.username == username)
    }

    pub fn torrent(&self, infohash: &InfoHash) -> Option<&TruthTorrent> {
        self.torrents.iter().find(|t| &t.infohash == infohash)
    }

    /// One JSON object per line: publishers, then torrents, then the run
    /// counts when given. Tagged by a `type` field.
    pub fn write_jsonl<W: Write>(&self, run: Option<&RunCounts>, mut w: W) -> io::Result<()> {
        let mut line = |l: &Line| -> io::Result<()> {
            serde_json::to_writer(&mut w, l)?;
            w.write_all(b"\n")
        };
        for p in &self.publishers {
            line(&Line::Publisher(p.clone()))?;
        }
        for t in &self.torrents {
            line(&Line::Torrent(t.clone()))?;
        }
        if let Some(r) = run {
            line(&Line::Run(r.clone()))?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> io::Result<(GroundTruth, Option<RunCounts>)> {
        let mut truth = GroundTruth::default();
        let mut run = None;
        for (i, l) in r.lines().enumerate() {
            let l = l?;
            if l.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&l)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?;
            match parsed {
                Line::Publisher(p) => truth.publishers.push(p),
                Line::Torrent(t) => truth.torrents.push(t),
                Line::Run(c) => run = Some(c),
            }
        }
        Ok((truth, run))
    }

    /// Business classes keyed by username, in the annotation format the
    /// analysis accepts.
    pub fn class_annotations(&self) -> BTreeMap<String, BusinessClass> {
        self.publishers
            .iter()
            .filter_map(|p| p.business_class.map(|c| (p.username.clone(), c)))
            .collect()
    }
}
