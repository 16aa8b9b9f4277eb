use std::net::IpAddr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::bencode::{InfoHash, TorrentMeta};
use crate::ingest::{FeedItem, FetchFailure};
use crate::monitor::{IdMethod, PublisherIdentification, SwarmSnapshot, TerminalStatus};
use crate::peer_wire::{ProbeOutcome, ProbeResult};
use crate::time::UnixTime;

pub const SCHEMA_VERSION: u32 = 1;

/// One line of the event log.
///
/// On disk: `{"v":1,"seq":N,"ts":T,"kind":"<kind>","data":{...}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub v: u32,
    pub seq: u64,
    pub ts: UnixTime,
    pub body: EventBody,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    FeedItem,
    Identification,
    Snapshot,
    Probe,
    PortalRemoval,
    TerminalStatus,
}

impl EventKind {
    pub const ALL: [EventKind; 6] = [
        EventKind::FeedItem,
        EventKind::Identification,
        EventKind::Snapshot,
        EventKind::Probe,
        EventKind::PortalRemoval,
        EventKind::TerminalStatus,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::FeedItem => "feed_item",
            EventKind::Identification => "identification",
            EventKind::Snapshot => "snapshot",
            EventKind::Probe => "probe",
            EventKind::PortalRemoval => "portal_removal",
            EventKind::TerminalStatus => "terminal_status",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq)]
pub enum EventBody {
    FeedItem(FeedItemEvent),
    Identification(PublisherIdentification),
    Snapshot(SwarmSnapshot),
    Probe(ProbeEvent),
    PortalRemoval(PortalRemoval),
    TerminalStatus(TerminalStatus),
}

/// A feed item together with the outcome of fetching its `.torrent`.
/// Exactly one of `torrent` and `failure` is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedItemEvent {
    pub item: FeedItem,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torrent: Option<TorrentMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FetchFailure>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeEvent {
    pub infohash: InfoHash,
    pub result: ProbeResult,
}

/// The portal took down a username's pages, the portal's own fake signal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortalRemoval {
    pub portal_id: String,
    pub username: String,
}

impl EventBody {
    pub fn kind(&self) -> EventKind {
        match self {
            EventBody::FeedItem(_) => EventKind::FeedItem,
            EventBody::Identification(_) => EventKind::Identification,
            EventBody::Snapshot(_) => EventKind::Snapshot,
            EventBody::Probe(_) => EventKind::Probe,
            EventBody::PortalRemoval(_) => EventKind::PortalRemoval,
            EventBody::TerminalStatus(_) => EventKind::TerminalStatus,
        }
    }

    pub fn infohash(&self) -> Option<InfoHash> {
        match self {
            EventBody::FeedItem(f) => f.torrent.as_ref().map(|t| t.infohash),
            EventBody::Identification(i) => Some(i.infohash),
            EventBody::Snapshot(s) => Some(s.infohash),
            EventBody::Probe(p) => Some(p.infohash),
            EventBody::PortalRemoval(_) => None,
            EventBody::TerminalStatus(t) => Some(t.infohash),
        }
    }

    /// Checks the per-kind schema rules.
    pub fn validate(&self) -> Result<(), InvalidEvent> {
        let bad = |m: &str| Err(InvalidEvent(m.to_owned()));
        match self {
            EventBody::FeedItem(f) => {
                if f.item.username.is_empty() || f.item.torrent_url.is_empty() || f.item.title.is_empty() {
                    return bad("feed item lacks username, title or url");
                }
                if f.torrent.is_some() == f.failure.is_some() {
                    return bad("feed item needs exactly one of torrent or failure");
                }
            }
            EventBody::Identification(i) => {
                if i.username.is_empty() {
                    return bad("identification without username");
                }
                if i.ip.is_some() != (i.method == IdMethod::SingleSeedBitfield) {
                    return bad("identification ip must be present iff method is single_seed_bitfield");
                }
                if i.ip.is_some() == i.reason_no_ip.is_some() {
                    return bad("identification needs exactly one of ip or reason_no_ip");
                }
            }
            EventBody::Snapshot(s) => {
                if s.empty != s.peers.is_empty() {
                    return bad("snapshot empty flag disagrees with peer list");
                }
                if s.peers.iter().any(|p| p.port() == 0) {
                    return bad("snapshot peer with port 0");
                }
                if s.vantage_id.is_empty() {
                    return bad("snapshot without vantage");
                }
            }
            EventBody::Probe(p) => {
                let has_count = matches!(p.result.outcome, ProbeOutcome::Seed | ProbeOutcome::NonSeed);
                if has_count != p.result.pieces_have.is_some() {
                    return bad("probe pieces_have must be present iff outcome is seed or non_seed");
                }
            }
            EventBody::PortalRemoval(r) => {
                if r.username.is_empty() {
                    return bad("removal without username");
                }
            }
            EventBody::TerminalStatus(t) => {
                if t.ended_at < t.started_at {
                    return bad("terminal status ends before it starts");
                }
            }
        }
        Ok(())
    }

    /// Addresses mentioned by this event, for reporting.
    pub fn ips(&self) -> Vec<IpAddr> {
        match self {
            EventBody::Identification(i) => i.ip.into_iter().collect(),
            EventBody::Snapshot(s) => s.peers.iter().map(|p| p.ip()).collect(),
            EventBody::Probe(p) => vec![p.result.endpoint.ip()],
            _ => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid event: {0}")]
pub struct InvalidEvent(pub String);

#[derive(Serialize)]
struct WireOut<'a, T: Serialize> {
    v: u32,
    seq: u64,
    ts: UnixTime,
    kind: EventKind,
    data: &'a T,
}

#[derive(Deserialize)]
struct WireIn<'a> {
    v: u32,
    seq: u64,
    ts: UnixTime,
    kind: EventKind,
    #[serde(borrow)]
    data: &'a RawValue,
}

impl Serialize for EventRecord {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        macro_rules! out {
            ($data:expr) => {
                WireOut {
                    v: self.v,
                    seq: self.seq,
                    ts: self.ts,
                    kind: self.body.kind(),
                    data: $data,
                }
                .serialize(s)
            };
        }
        match &self.body {
            EventBody::FeedItem(d) => out!(d),
            EventBody::Identification(d) => out!(d),
            EventBody::Snapshot(d) => out!(d),
            EventBody::Probe(d) => out!(d),
            EventBody::PortalRemoval(d) => out!(d),
            EventBody::TerminalStatus(d) => out!(d),
        }
    }
}

impl<'de> Deserialize<'de> for EventRecord {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let w = WireIn::deserialize(d)?;
        let raw = w.data.get();
        fn parse<'a, T: Deserialize<'a>, E: serde::de::Error>(raw: &'a str) -> Result<T, E> {
            serde_json::from_str(raw).map_err(E::custom)
        }
        let body = match w.kind {
            EventKind::FeedItem => EventBody::FeedItem(parse(raw)?),
            EventKind::Identification => EventBody::Identification(parse(raw)?),
            EventKind::Snapshot => EventBody::Snapshot(parse(raw)?),
            EventKind::Probe => EventBody::Probe(parse(raw)?),
            EventKind::PortalRemoval => EventBody::PortalRemoval(parse(raw)?),
            EventKind::TerminalStatus => EventBody::TerminalStatus(parse(raw)?),
        };
        if w.v != SCHEMA_VERSION {
            return Err(D::Error::custom(format!("unsupported schema version {}", w.v)));
        }
        Ok(EventRecord {
            v: w.v,
            seq: w.seq,
            ts: w.ts,
            body,
        })
    }
}
