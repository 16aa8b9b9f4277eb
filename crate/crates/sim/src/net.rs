use std::collections::BTreeMap;
use std::io::{self, Cursor, Read, Write};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use rand_chacha::ChaCha8Rng;
use seedscope_core::ingest::{render_feed, PortalProfile};
use seedscope_core::peer_wire::{
    bitfield_with_prefix, probe_stream, Handshake, Message, ProbeOutcome, ProbeResult, Prober,
};
use seedscope_core::time::{Clock, ManualClock, UnixTime};
use seedscope_core::tracker::{encode_announce_response, encode_failure, parse_announce_query};
use seedscope_core::transport::{Transport, TransportError};
use seedscope_core::InfoHash;

use crate::world::{sim_announce, stream, World, STREAM_ANNOUNCE};

/// Feed profile matching the simulated portal's RSS.
pub fn portal_profile(world: &World) -> PortalProfile {
    let p = &world.config.portal;
    PortalProfile {
        portal_id: p.portal_id.clone(),
        feed_url: p.feed_url.clone(),
        subcategory: Some("subcategory".into()),
        poll_interval_s: p.poll_interval.0,
        ..PortalProfile::default()
    }
}

/// One announce the simulated tracker answered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryRecord {
    pub at: UnixTime,
    pub peer_id: Vec<u8>,
    pub infohash: InfoHash,
}

/// Serves the portal feed, `.torrent` files and the tracker of a [`World`]
/// at the time shown by the shared clock.
pub struct SimTransport {
    world: Arc<World>,
    clock: Arc<ManualClock>,
    profile: PortalProfile,
    // one sampling stream per swarm, so answers do not depend on how
    // queries to different swarms interleave
    rngs: Mutex<BTreeMap<usize, ChaCha8Rng>>,
    queries: Mutex<Vec<QueryRecord>>,
}

impl SimTransport {
    pub fn new(world: Arc<World>, clock: Arc<ManualClock>) -> Self {
        let profile = portal_profile(&world);
        Self {
            world,
            clock,
            profile,
            rngs: Mutex::new(BTreeMap::new()),
            queries: Mutex::new(Vec::new()),
        }
    }

    pub fn queries(&self) -> Vec<QueryRecord> {
        self.queries.lock().expect("query log").clone()
    }

    fn announce(&self, url: &str, now: UnixTime) -> Vec<u8> {
        let Some(q) = parse_announce_query(url) else {
            return encode_failure("malformed announce");
        };
        let Some(&index) = self.world.by_infohash.get(&q.infohash) else {
            return encode_failure("unregistered torrent");
        };
        self.queries.lock().expect("query log").push(QueryRecord {
            at: now,
            peer_id: q.peer_id.clone(),
            infohash: q.infohash,
        });
        let w = self.world.config.tracker_sample_size;
        let want = q.numwant.map_or(w, |n| (n as usize).min(w));
        let mut rngs = self.rngs.lock().expect("tracker rng");
        let rng = rngs
            .entry(index)
            .or_insert_with(|| stream(self.world.config.rng_seed, STREAM_ANNOUNCE + index as u64));
        match sim_announce(&self.world, q.infohash, now, want, rng) {
            Ok(r) => encode_announce_response(r.seeders, r.leechers, r.interval_s, &r.peers),
            Err(e) => encode_failure(&e.to_string()),
        }
    }
}

impl Transport for SimTransport {
    fn get(&self, url: &str) -> Result<Vec<u8>, TransportError> {
        let now = self.clock.now();
        let portal = &self.world.config.portal;
        if url == portal.feed_url {
            let items = self.world.feed_at(now, portal.feed_size);
            return Ok(render_feed(&self.profile, &items).into_bytes());
        }
        if let Some(rest) = url.strip_prefix(&portal.torrent_base_url) {
            let t = rest
                .strip_suffix(".torrent")
                .and_then(|i| i.parse::<usize>().ok())
                .and_then(|i| self.world.torrents.get(i))
                .filter(|t| t.item.published_at <= now)
                .ok_or(TransportError::Status(404))?;
            return Ok(t.metainfo.clone());
        }
        if url.starts_with(&portal.tracker_url) {
            return Ok(self.announce(url, now));
        }
        Err(TransportError::Connect(format!("no simulated host for {url}")))
    }
}

/// A scripted remote peer: replays its side of the exchange, swallows ours.
struct ScriptedPeer {
    reply: Cursor<Vec<u8>>,
    sent: Vec<u8>,
}

impl Read for ScriptedPeer {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        self.reply.read(buf)
    }
}

impl Write for ScriptedPeer {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.sent.extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Probes simulated peers through the real handshake/bitfield code. Peers
/// behind NAT, and endpoints not in the swarm at probe time, refuse.
pub struct SimProber {
    world: Arc<World>,
    clock: Arc<ManualClock>,
    peer_id: [u8; 20],
}

impl SimProber {
    pub fn new(world: Arc<World>, clock: Arc<ManualClock>) -> Self {
        Self {
            world,
            clock,
            peer_id: *b"-SS0100-simprobe0000",
        }
    }
}

impl Prober for SimProber {
    fn probe(&self, endpoint: SocketAddr, infohash: InfoHash, piece_count: u64) -> ProbeResult {
        let now = self.clock.now();
        let refused = ProbeResult {
            endpoint,
            outcome: ProbeOutcome::Refused,
            pieces_have: None,
            probed_at: now,
        };
        let Some(t) = self.world.torrent(&infohash) else {
            return refused;
        };
        let Some(peer) = t.present(now).find(|p| p.endpoint() == endpoint) else {
            return refused;
        };
        if peer.nat {
            return refused;
        }
        let mut their_id = [0u8; 20];
        their_id[..8].copy_from_slice(b"-SIM001-");
        their_id[8..12].copy_from_slice(&peer.ip.octets());
        their_id[12..14].copy_from_slice(&peer.port.to_be_bytes());
        let have = peer.pieces_have(now, t.piece_count);
        let mut reply = Handshake::new(infohash, their_id).encode().to_vec();
        reply.extend(Message::Bitfield(bitfield_with_prefix(t.piece_count, have)).encode());
        let mut s = ScriptedPeer {
            reply: Cursor::new(reply),
            sent: Vec::new(),
        };
        let (outcome, pieces_have) = probe_stream(&mut s, infohash, self.peer_id, piece_count);
        ProbeResult {
            endpoint,
            outcome,
            pieces_have,
            probed_at: now,
        }
    }

    // the world is single-threaded; probe in order
    fn probe_many(&self, endpoints: &[SocketAddr], infohash: InfoHash, piece_count: u64) -> Vec<ProbeResult> {
        endpoints
            .iter()
            .map(|&e| self.probe(e, infohash, piece_count))
            .collect()
    }
}
