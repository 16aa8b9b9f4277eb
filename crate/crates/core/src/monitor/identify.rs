use std::net::IpAddr;

use serde::{Deserialize, Serialize};

use crate::bencode::{InfoHash, TorrentMeta};
use crate::peer_wire::{ProbeOutcome, ProbeResult, Prober};
use crate::tracker::AnnounceResult;

/// Largest swarm, exclusive, in which peers are probed for the publisher.
pub const MAX_PROBE_PEERS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdMethod {
    SingleSeedBitfield,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoIpReason {
    MultiSeed,
    TooManyPeers,
    Nat,
    NoSeedReported,
    PrePublished,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublisherIdentification {
    pub infohash: InfoHash,
    pub username: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ip: Option<IpAddr>,
    pub method: IdMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason_no_ip: Option<NoIpReason>,
}

impl PublisherIdentification {
    fn username_only(infohash: InfoHash, username: &str, reason: NoIpReason) -> Self {
        Self {
            infohash,
            username: username.to_owned(),
            ip: None,
            method: IdMethod::None,
            reason_no_ip: Some(reason),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Identified {
    pub identification: PublisherIdentification,
    /// Every probe issued, in peer order. Empty when no probing happened.
    pub probes: Vec<ProbeResult>,
}

/// Pins the initial publisher of a newborn swarm.
///
/// Peers are probed only when the tracker reports exactly one seeder among
/// fewer than [`MAX_PROBE_PEERS`] peers. A swarm that is already large and
/// has several seeders at first contact is taken to have been published
/// elsewhere first.
pub fn identify_initial_publisher<P: Prober + ?Sized>(
    meta: &TorrentMeta,
    username: &str,
    first: &AnnounceResult,
    prober: &P,
) -> Identified {
    let ih = meta.infohash;
    let none = |reason| Identified {
        identification: PublisherIdentification::username_only(ih, username, reason),
        probes: Vec::new(),
    };
    let large = first.peers.len() >= MAX_PROBE_PEERS;
    if first.seeders == 0 {
        return none(NoIpReason::NoSeedReported);
    }
    if large && first.seeders > 1 {
        return none(NoIpReason::PrePublished);
    }
    if first.seeders > 1 {
        return none(NoIpReason::MultiSeed);
    }
    if large {
        return none(NoIpReason::TooManyPeers);
    }

    let probes = prober.probe_many(&first.peers, ih, meta.piece_count);
    let seeds: Vec<&ProbeResult> = probes.iter().filter(|p| p.outcome == ProbeOutcome::Seed).collect();
    let identification = match seeds.as_slice() {
        [only] => PublisherIdentification {
            infohash: ih,
            username: username.to_owned(),
            ip: Some(only.endpoint.ip()),
            method: IdMethod::SingleSeedBitfield,
            reason_no_ip: None,
        },
        [] => PublisherIdentification::username_only(ih, username, NoIpReason::Nat),
        _ => PublisherIdentification::username_only(ih, username, NoIpReason::MultiSeed),
    };
    Identified { identification, probes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;
    use std::net::SocketAddr;

    struct Table(HashMap<SocketAddr, ProbeOutcome>);

    impl Prober for Table {
        fn probe(&self, endpoint: SocketAddr, _: InfoHash, piece_count: u64) -> ProbeResult {
            let outcome = self.0.get(&endpoint).copied().unwrap_or(ProbeOutcome::Refused);
            let pieces_have = match outcome {
                ProbeOutcome::Seed => Some(piece_count),
                ProbeOutcome::NonSeed => Some(0),
                _ => None,
            };
            ProbeResult {
                endpoint,
                outcome,
                pieces_have,
                probed_at: 0,
            }
        }
    }

    fn meta() -> TorrentMeta {
        TorrentMeta {
            infohash: InfoHash([7; 20]),
            name: b"x".to_vec(),
            piece_count: 8,
            piece_length: 16,
            total_size: 128,
            announce_url: "http://t/announce".into(),
            announce_list: None,
            files: vec![],
        }
    }

    fn peers(n: usize) -> Vec<SocketAddr> {
        (0..n)
            .map(|i| SocketAddr::from(([10, 0, 0, i as u8 + 1], 6881)))
            .collect()
    }

    fn first(seeders: u32, n: usize) -> AnnounceResult {
        AnnounceResult {
            seeders,
            leechers: n as u32 - seeders.min(n as u32),
            interval_s: 1800,
            peers: peers(n),
            received_at: 0,
            vantage_id: "v0".into(),
        }
    }

    #[test]
    fn single_seed_identified() {
        let ps = peers(5);
        let mut t: HashMap<_, _> = ps.iter().map(|&p| (p, ProbeOutcome::NonSeed)).collect();
        t.insert(ps[3], ProbeOutcome::Seed);
        let out = identify_initial_publisher(&meta(), "alice", &first(1, 5), &Table(t));
        assert_eq!(out.identification.ip, Some(ps[3].ip()));
        assert_eq!(out.identification.method, IdMethod::SingleSeedBitfield);
        assert_eq!(out.identification.reason_no_ip, None);
        assert_eq!(out.probes.len(), 5);
    }

    #[test]
    fn reasons() {
        let none = Table(HashMap::new());
        let r = |s, n| {
            identify_initial_publisher(&meta(), "bob", &first(s, n), &none)
                .identification
                .reason_no_ip
        };
        assert_eq!(r(2, 5), Some(NoIpReason::MultiSeed));
        assert_eq!(r(1, 25), Some(NoIpReason::TooManyPeers));
        assert_eq!(r(1, 20), Some(NoIpReason::TooManyPeers));
        assert_eq!(r(1, 5), Some(NoIpReason::Nat));
        assert_eq!(r(0, 5), Some(NoIpReason::NoSeedReported));
        assert_eq!(r(4, 30), Some(NoIpReason::PrePublished));
    }

    #[test]
    fn two_seed_probes_is_multi_seed() {
        let ps = peers(4);
        let t = Table([(ps[0], ProbeOutcome::Seed), (ps[2], ProbeOutcome::Seed)].into());
        let out = identify_initial_publisher(&meta(), "carol", &first(1, 4), &t);
        assert_eq!(out.identification.reason_no_ip, Some(NoIpReason::MultiSeed));
        assert_eq!(out.identification.ip, None);
        assert_eq!(out.identification.username, "carol");
    }
}
