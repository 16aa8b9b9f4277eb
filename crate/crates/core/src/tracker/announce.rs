use std::collections::BTreeMap;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr, SocketAddr};

use percent_encoding::{percent_decode, percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};
use thiserror::Error;

use crate::bencode::{self, InfoHash, TorrentMeta, Value};
use crate::time::UnixTime;

/// Peers requested per announce when the caller does not say otherwise.
pub const DEFAULT_NUMWANT: u32 = 200;

/// Bytes left unescaped in query strings: RFC 3986 unreserved characters.
const QUERY: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_').remove(b'~');

/// A crawler identity. Each vantage has its own peer id and its own rate-limit slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Vantage {
    pub id: String,
    pub peer_id: [u8; 20],
    pub port: u16,
}

impl Vantage {
    /// Peer id is `-SS0100-` followed by twelve hex digits derived from the id.
    pub fn new(id: impl Into<String>, port: u16) -> Self {
        let id = id.into();
        let digest = hex::encode(Sha1::digest(id.as_bytes()));
        let mut peer_id = [0u8; 20];
        peer_id[..8].copy_from_slice(b"-SS0100-");
        peer_id[8..].copy_from_slice(&digest.as_bytes()[..12]);
        Self { id, peer_id, port }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnounceEvent {
    Started,
    Stopped,
    Completed,
}

impl AnnounceEvent {
    fn as_str(self) -> &'static str {
        match self {
            AnnounceEvent::Started => "started",
            AnnounceEvent::Stopped => "stopped",
            AnnounceEvent::Completed => "completed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnounceRequest {
    pub infohash: InfoHash,
    pub peer_id: [u8; 20],
    pub port: u16,
    pub numwant: u32,
    /// `None` omits the parameter, i.e. a regular periodic announce.
    pub event: Option<AnnounceEvent>,
    pub tracker_url: String,
}

impl AnnounceRequest {
    /// The GET URL. Monitoring announces report nothing transferred and
    /// nothing left, so the crawler never presents itself as a leecher.
    pub fn to_url(&self) -> String {
        let sep = if self.tracker_url.contains('?') { '&' } else { '?' };
        let mut url = format!(
            "{}{sep}info_hash={}&peer_id={}&port={}&uploaded=0&downloaded=0&left=0&compact=1&numwant={}",
            self.tracker_url,
            percent_encode(self.infohash.as_bytes(), QUERY),
            percent_encode(&self.peer_id, QUERY),
            self.port,
            self.numwant.max(1),
        );
        if let Some(ev) = self.event {
            url.push_str("&event=");
            url.push_str(ev.as_str());
        }
        url
    }
}

pub fn build_announce(meta: &TorrentMeta, vantage: &Vantage, numwant: Option<u32>) -> (AnnounceRequest, String) {
    let req = AnnounceRequest {
        infohash: meta.infohash,
        peer_id: vantage.peer_id,
        port: vantage.port,
        numwant: numwant.unwrap_or(DEFAULT_NUMWANT).max(1),
        event: None,
        tracker_url: meta.announce_url.clone(),
    };
    let url = req.to_url();
    (req, url)
}

/// Tracker-side view of an announce query string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnounceQuery {
    pub infohash: InfoHash,
    pub peer_id: Vec<u8>,
    pub port: u16,
    pub numwant: Option<u32>,
    pub compact: bool,
    pub event: Option<String>,
}

/// Parses the query part of an announce URL (everything after `?`, or the whole URL).
pub fn parse_announce_query(url: &str) -> Option<AnnounceQuery> {
    let query = url.split_once('?').map_or(url, |(_, q)| q);
    let mut params: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
    for pair in query.split('&').filter(|p| !p.is_empty()) {
        let (k, v) = pair.split_once('=').unwrap_or((pair, ""));
        params.insert(k, percent_decode(v.as_bytes()).collect());
    }
    let text = |k: &str| params.get(k).and_then(|v| std::str::from_utf8(v).ok());
    let infohash: [u8; 20] = params.get("info_hash")?.as_slice().try_into().ok()?;
    Some(AnnounceQuery {
        infohash: InfoHash(infohash),
        peer_id: params.get("peer_id")?.clone(),
        port: text("port")?.parse().ok()?,
        numwant: text("numwant").and_then(|n| n.parse().ok()),
        compact: text("compact") == Some("1"),
        event: text("event").map(str::to_owned),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnounceResult {
    /// Peers with the complete content (`complete`).
    pub seeders: u32,
    /// Peers still downloading (`incomplete`).
    pub leechers: u32,
    pub interval_s: u32,
    pub peers: Vec<SocketAddr>,
    pub received_at: UnixTime,
    pub vantage_id: String,
}

impl AnnounceResult {
    /// An "empty reply": no peers returned.
    pub fn is_empty(&self) -> bool {
        self.peers.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrackerError {
    #[error("tracker error: {0}")]
    Failure(String),
    #[error("malformed tracker response: {0}")]
    Malformed(String),
}

const DEFAULT_INTERVAL: u32 = 1800;

pub fn parse_announce_response(
    bytes: &[u8],
    vantage_id: &str,
    received_at: UnixTime,
) -> Result<AnnounceResult, TrackerError> {
    let malformed = |m: &str| TrackerError::Malformed(m.to_owned());
    let root = bencode::decode_with(bytes, bencode::Mode::Lenient)
        .map_err(|e| TrackerError::Malformed(e.to_string()))?
        .value;
    if root.as_dict().is_none() {
        return Err(malformed("not a dictionary"));
    }
    if let Some(reason) = root.get("failure reason") {
        let msg = reason
            .as_bytes()
            .map(|b| String::from_utf8_lossy(b).into_owned())
            .unwrap_or_default();
        return Err(TrackerError::Failure(msg));
    }
    let count = |key: &str| -> Result<u32, TrackerError> {
        match root.get(key) {
            None => Ok(0),
            Some(v) => v
                .as_int()
                .and_then(|n| u32::try_from(n).ok())
                .ok_or_else(|| TrackerError::Malformed(format!("bad `{key}`"))),
        }
    };
    let seeders = count("complete")?;
    let leechers = count("incomplete")?;
    let interval_s = match root.get("interval") {
        None => DEFAULT_INTERVAL,
        Some(v) => v
            .as_int()
            .and_then(|n| u32::try_from(n).ok())
            .filter(|&n| n > 0)
            .ok_or_else(|| malformed("bad `interval`"))?,
    };

    let mut peers = Vec::new();
    match root.get("peers") {
        None => {}
        Some(Value::Bytes(b)) => {
            if b.len() % 6 != 0 {
                return Err(malformed("compact peers length not a multiple of 6"));
            }
            for c in b.chunks_exact(6) {
                let ip = Ipv4Addr::new(c[0], c[1], c[2], c[3]);
                let port = u16::from_be_bytes([c[4], c[5]]);
                push_peer(&mut peers, IpAddr::V4(ip), port);
            }
        }
        Some(Value::List(list)) => {
            for entry in list {
                let ip = entry
                    .get("ip")
                    .and_then(Value::as_str)
                    .and_then(|s| s.parse::<IpAddr>().ok())
                    .ok_or_else(|| malformed("peer entry without a valid `ip`"))?;
                let port = entry
                    .get("port")
                    .and_then(Value::as_int)
                    .and_then(|p| u16::try_from(p).ok())
                    .ok_or_else(|| malformed("peer entry without a valid `port`"))?;
                push_peer(&mut peers, ip, port);
            }
        }
        Some(_) => return Err(malformed("`peers` has the wrong type")),
    }
    if let Some(Value::Bytes(b)) = root.get("peers6") {
        if b.len() % 18 != 0 {
            return Err(malformed("compact peers6 length not a multiple of 18"));
        }
        for c in b.chunks_exact(18) {
            let octets: [u8; 16] = c[..16].try_into().expect("chunk of 18");
            let port = u16::from_be_bytes([c[16], c[17]]);
            push_peer(&mut peers, IpAddr::V6(Ipv6Addr::from(octets)), port);
        }
    }

    Ok(AnnounceResult {
        seeders,
        leechers,
        interval_s,
        peers,
        received_at,
        vantage_id: vantage_id.to_owned(),
    })
}

fn push_peer(peers: &mut Vec<SocketAddr>, ip: IpAddr, port: u16) {
    if port == 0 {
        log::debug!("dropping peer {ip} with port 0");
        return;
    }
    peers.push(SocketAddr::new(ip, port));
}

/// Serializes a successful response with compact peers. IPv6 peers go to `peers6`.
pub fn encode_announce_response(seeders: u32, leechers: u32, interval_s: u32, peers: &[SocketAddr]) -> Vec<u8> {
    let mut v4 = Vec::new();
    let mut v6 = Vec::new();
    for p in peers {
        match p.ip() {
            IpAddr::V4(ip) => {
                v4.extend_from_slice(&ip.octets());
                v4.extend_from_slice(&p.port().to_be_bytes());
            }
            IpAddr::V6(ip) => {
                v6.extend_from_slice(&ip.octets());
                v6.extend_from_slice(&p.port().to_be_bytes());
            }
        }
    }
    let mut d = BTreeMap::new();
    d.insert(b"complete".to_vec(), Value::Int(seeders.into()));
    d.insert(b"incomplete".to_vec(), Value::Int(leechers.into()));
    d.insert(b"interval".to_vec(), Value::Int(interval_s.into()));
    d.insert(b"peers".to_vec(), Value::Bytes(v4));
    if !v6.is_empty() {
        d.insert(b"peers6".to_vec(), Value::Bytes(v6));
    }
    bencode::encode(&Value::Dict(d))
}

pub fn encode_failure(reason: &str) -> Vec<u8> {
    let mut d = BTreeMap::new();
    d.insert(b"failure reason".to_vec(), Value::from(reason));
    bencode::encode(&Value::Dict(d))
}
