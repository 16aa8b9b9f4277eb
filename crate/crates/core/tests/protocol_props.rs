use std::collections::BTreeMap;
use std::io::{self, Cursor, Read, Write};
use std::net::{Ipv4Addr, SocketAddr, SocketAddrV4};
use std::path::Path;

use proptest::prelude::*;
use seedscope_core::bencode::{self, decode_with, encode, infohash, parse_metainfo, Mode, Value};
use seedscope_core::peer_wire::{bitfield_with_prefix, probe_stream, Handshake, Message, ProbeOutcome};
use seedscope_core::tracker::{encode_announce_response, parse_announce_response, Decision, RateLimiter};
use seedscope_core::InfoHash;

fn value() -> impl Strategy<Value = Value> {
    let leaf = prop_oneof![
        any::<i64>().prop_map(Value::Int),
        prop::collection::vec(any::<u8>(), 0..=1024).prop_map(Value::Bytes),
    ];
    // depth at most 6
    leaf.prop_recursive(6, 64, 6, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..6).prop_map(Value::List),
            prop::collection::btree_map(prop::collection::vec(any::<u8>(), 0..12), inner, 0..6).prop_map(Value::Dict),
        ]
    })
}

fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)).unwrap()
}

#[test]
fn fixture_infohashes() {
    // values from an independent torrent library
    for (f, want) in [
        ("single_seed.torrent", "c1f5a8c8fc5f6545d29c7939e5b147bec0f838e0"),
        ("multi_file.torrent", "aebaf0c4302d2120dc0d6dbb9a467b7fc88bdf5d"),
    ] {
        let bytes = fixture(f);
        let a = parse_metainfo(&bytes).unwrap();
        let b = parse_metainfo(&bytes).unwrap();
        assert_eq!(a.infohash.to_hex(), want);
        assert_eq!(a, b);
    }
    let multi = parse_metainfo(&fixture("multi_file.torrent")).unwrap();
    assert!(multi.files.len() > 1);
}

#[test]
fn unsorted_info_hashes_original_bytes() {
    let info = b"d6:lengthi5e4:name1:x12:piece lengthi16384e6:pieces20:aaaaaaaaaaaaaaaaaaaa3:zzzi1e1:ai0ee";
    let mut t = b"d8:announce9:http://t/4:info".to_vec();
    t.extend_from_slice(info);
    t.push(b'e');
    assert!(decode_with(&t, Mode::Strict).is_err());
    let meta = parse_metainfo(&t).unwrap();
    assert_eq!(meta.infohash, infohash(info));
    // re-encoding would sort the keys and change the hash
    let canonical = encode(&bencode::decode_with(info, Mode::Lenient).unwrap().value);
    assert_ne!(infohash(&canonical), meta.infohash);
}

#[test]
fn strict_rejects_non_canonical_integers() {
    for bad in [
        &b"i03e"[..],
        b"i-0e",
        b"d1:bi1e1:ai2ee",
        b"d1:ai1e1:ai2ee",
        b"i9223372036854775808e",
    ] {
        assert!(
            decode_with(bad, Mode::Strict).is_err(),
            "{}",
            String::from_utf8_lossy(bad)
        );
    }
    assert!(decode_with(b"i03e", Mode::Lenient).is_ok());
}

proptest! {
    #[test]
    fn bencode_round_trip(v in value()) {
        let bytes = encode(&v);
        prop_assert!(decode_with(&bytes, Mode::Strict).unwrap().value == v);
    }

    #[test]
    fn canonical_bytes_re_encode_identically(v in value()) {
        let b = encode(&v);
        let back = decode_with(&b, Mode::Strict).unwrap();
        prop_assert!(back.warnings.is_empty());
        prop_assert_eq!(encode(&back.value), b);
    }

    #[test]
    fn announce_response_round_trip(
        seeders in any::<u32>(),
        leechers in any::<u32>(),
        interval in 1u32..100_000,
        peers in prop::collection::vec((any::<u32>(), 1u16..=65535), 0..80),
    ) {
        let peers: Vec<SocketAddr> = peers
            .into_iter()
            .map(|(ip, port)| SocketAddr::V4(SocketAddrV4::new(Ipv4Addr::from(ip), port)))
            .collect();
        let bytes = encode_announce_response(seeders, leechers, interval, &peers);
        let r = parse_announce_response(&bytes, "v0", 7).unwrap();
        prop_assert_eq!(r.seeders, seeders);
        prop_assert_eq!(r.leechers, leechers);
        prop_assert_eq!(r.interval_s, interval);
        prop_assert_eq!(r.peers, peers);
        prop_assert_eq!(r.received_at, 7);
    }

    #[test]
    fn limiter_spaces_each_vantage_tracker_pair(
        steps in prop::collection::vec((0usize..3, 0usize..2, 0i64..400), 1..300),
        interval in 1i64..900,
    ) {
        let trackers = ["http://a/announce", "http://b/announce"];
        let l = RateLimiter::new(interval);
        let mut now = 0;
        let mut granted: BTreeMap<(usize, usize), Vec<i64>> = BTreeMap::new();
        for (v, t, dt) in steps {
            now += dt;
            match l.acquire(&format!("v{v}"), trackers[t], now) {
                Decision::Proceed => granted.entry((v, t)).or_default().push(now),
                Decision::WaitUntil(at) => {
                    let last = *granted[&(v, t)].last().unwrap();
                    prop_assert_eq!(at, last + interval);
                    prop_assert!(at > now);
                }
            }
        }
        for times in granted.values() {
            prop_assert!(times.windows(2).all(|w| w[1] - w[0] >= interval));
        }
    }

    #[test]
    fn probe_classifies_by_bitfield(piece_count in 1u64..3000, have in 0u64..3000, keepalives in 0usize..3) {
        let have = have.min(piece_count);
        let ih = InfoHash([9; 20]);
        let mut reply = Handshake::new(ih, [1; 20]).encode().to_vec();
        for _ in 0..keepalives {
            reply.extend(Message::KeepAlive.encode());
        }
        reply.extend(Message::Bitfield(bitfield_with_prefix(piece_count, have)).encode());
        // a peer that would go on to unchoke us
        reply.extend(Message::Unchoke.encode());
        let mut peer = Scripted { reply: Cursor::new(reply), sent: Vec::new() };
        let (outcome, got) = probe_stream(&mut peer, ih, [2; 20], piece_count);
        let want = if have == piece_count { ProbeOutcome::Seed } else { ProbeOutcome::NonSeed };
        prop_assert_eq!(outcome, want);
        prop_assert_eq!(got, Some(have));
        // observer neutrality: nothing beyond our handshake
        prop_assert_eq!(peer.sent, Handshake::new(ih, [2; 20]).encode().to_vec());
    }

    #[test]
    fn short_bitfield_is_not_a_seed(piece_count in 9u64..3000) {
        let ih = InfoHash([9; 20]);
        let mut reply = Handshake::new(ih, [1; 20]).encode().to_vec();
        let mut bits = bitfield_with_prefix(piece_count, piece_count);
        bits.pop();
        reply.extend(Message::Bitfield(bits).encode());
        let mut peer = Scripted { reply: Cursor::new(reply), sent: Vec::new() };
        prop_assert_eq!(probe_stream(&mut peer, ih, [2; 20], piece_count), (ProbeOutcome::NoBitfield, None));
    }
}

#[test]
fn have_messages_are_not_reconstructed() {
    let ih = InfoHash([3; 20]);
    let mut reply = Handshake::new(ih, [1; 20]).encode().to_vec();
    reply.extend(Message::Have(0).encode());
    let mut peer = Scripted {
        reply: Cursor::new(reply),
        sent: Vec::new(),
    };
    assert_eq!(
        probe_stream(&mut peer, ih, [2; 20], 1),
        (ProbeOutcome::NoBitfield, None)
    );
}

#[test]
fn wrong_infohash_is_rejected() {
    let mut reply = Handshake::new(InfoHash([4; 20]), [1; 20]).encode().to_vec();
    reply.extend(Message::Bitfield(vec![0x80]).encode());
    let mut peer = Scripted {
        reply: Cursor::new(reply),
        sent: Vec::new(),
    };
    let (outcome, have) = probe_stream(&mut peer, InfoHash([3; 20]), [2; 20], 1);
    assert_ne!(outcome, ProbeOutcome::Seed);
    assert_eq!(have, None);
}

struct Scripted {
    reply: Cursor<Vec<u8>>,
    sent: Vec<u8>,
}

impl Read for Scripted {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        self.reply.read(buf)
    }
}

impl Write for Scripted {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.sent.extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}
