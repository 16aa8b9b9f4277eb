//! Just enough of the peer wire protocol to learn whether a peer is a seed:
//! send a handshake, read the peer's handshake and first message, hang up.
//!
//! A probe writes the 68-byte handshake and nothing else. It never sends
//! `interested`, requests or its own bitfield, so it cannot advance piece
//! exchange in the observed swarm.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bencode::InfoHash;
use crate::time::{Clock, UnixTime};

pub const PROTOCOL: &[u8; 19] = b"BitTorrent protocol";
pub const HANDSHAKE_LEN: usize = 68;
pub const DEFAULT_PROBE_TIMEOUT: Duration = Duration::from_secs(5);

const MAX_MESSAGE_LEN: u32 = 1 << 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("bitfield is {actual} bytes, expected {expected} for {piece_count} pieces")]
    LengthMismatch {
        actual: usize,
        expected: usize,
        piece_count: u64,
    },
    #[error("bad handshake")]
    BadHandshake,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Handshake {
    pub reserved: [u8; 8],
    pub infohash: InfoHash,
    pub peer_id: [u8; 20],
}

impl Handshake {
    pub fn new(infohash: InfoHash, peer_id: [u8; 20]) -> Self {
        Self {
            reserved: [0; 8],
            infohash,
            peer_id,
        }
    }

    pub fn encode(&self) -> [u8; HANDSHAKE_LEN] {
        let mut out = [0u8; HANDSHAKE_LEN];
        out[0] = PROTOCOL.len() as u8;
        out[1..20].copy_from_slice(PROTOCOL);
        out[20..28].copy_from_slice(&self.reserved);
        out[28..48].copy_from_slice(self.infohash.as_bytes());
        out[48..68].copy_from_slice(&self.peer_id);
        out
    }

    pub fn decode(b: &[u8; HANDSHAKE_LEN]) -> Result<Self, WireError> {
        if b[0] as usize != PROTOCOL.len() || &b[1..20] != PROTOCOL {
            return Err(WireError::BadHandshake);
        }
        Ok(Self {
            reserved: b[20..28].try_into().expect("8 bytes"),
            infohash: InfoHash(b[28..48].try_into().expect("20 bytes")),
            peer_id: b[48..68].try_into().expect("20 bytes"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    KeepAlive,
    Choke,
    Unchoke,
    Interested,
    NotInterested,
    Have(u32),
    Bitfield(Vec<u8>),
    Other { id: u8, payload: Vec<u8> },
}

impl Message {
    pub const BITFIELD_ID: u8 = 5;

    pub fn encode(&self) -> Vec<u8> {
        let (id, payload): (u8, Vec<u8>) = match self {
            Message::KeepAlive => return vec![0, 0, 0, 0],
            Message::Choke => (0, vec![]),
            Message::Unchoke => (1, vec![]),
            Message::Interested => (2, vec![]),
            Message::NotInterested => (3, vec![]),
            Message::Have(i) => (4, i.to_be_bytes().to_vec()),
            Message::Bitfield(b) => (Self::BITFIELD_ID, b.clone()),
            Message::Other { id, payload } => (*id, payload.clone()),
        };
        let mut out = Vec::with_capacity(5 + payload.len());
        out.extend_from_slice(&(payload.len() as u32 + 1).to_be_bytes());
        out.push(id);
        out.extend_from_slice(&payload);
        out
    }

    /// Reads one length-prefixed message.
    pub fn read_from<R: Read>(r: &mut R) -> io::Result<Message> {
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let len = u32::from_be_bytes(len);
        if len == 0 {
            return Ok(Message::KeepAlive);
        }
        if len > MAX_MESSAGE_LEN {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "message too long"));
        }
        let mut body = vec![0u8; len as usize];
        r.read_exact(&mut body)?;
        let id = body[0];
        let payload = body.split_off(1);
        Ok(match (id, payload.len()) {
            (0, 0) => Message::Choke,
            (1, 0) => Message::Unchoke,
            (2, 0) => Message::Interested,
            (3, 0) => Message::NotInterested,
            (4, 4) => Message::Have(u32::from_be_bytes(payload[..4].try_into().expect("4 bytes"))),
            (Self::BITFIELD_ID, _) => Message::Bitfield(payload),
            _ => Message::Other { id, payload },
        })
    }
}

fn expected_len(piece_count: u64) -> usize {
    piece_count.div_ceil(8) as usize
}

fn check_len(bitfield: &[u8], piece_count: u64) -> Result<(), WireError> {
    let expected = expected_len(piece_count);
    if bitfield.len() != expected {
        return Err(WireError::LengthMismatch {
            actual: bitfield.len(),
            expected,
            piece_count,
        });
    }
    Ok(())
}

/// Number of pieces set among the first `piece_count` bits (most significant bit first).
pub fn count_pieces(bitfield: &[u8], piece_count: u64) -> Result<u64, WireError> {
    check_len(bitfield, piece_count)?;
    let full = (piece_count / 8) as usize;
    let mut n: u64 = bitfield[..full].iter().map(|b| b.count_ones() as u64).sum();
    let rem = piece_count % 8;
    if rem > 0 {
        let mask = 0xFFu8 << (8 - rem);
        n += (bitfield[full] & mask).count_ones() as u64;
    }
    Ok(n)
}

/// True iff every piece is present; trailing padding bits are ignored.
pub fn is_seed(bitfield: &[u8], piece_count: u64) -> Result<bool, WireError> {
    Ok(count_pieces(bitfield, piece_count)? == piece_count)
}

/// Bitfield with the first `have` of `piece_count` pieces set.
pub fn bitfield_with_prefix(piece_count: u64, have: u64) -> Vec<u8> {
    let mut b = vec![0u8; expected_len(piece_count)];
    for i in 0..have.min(piece_count) {
        b[(i / 8) as usize] |= 0x80 >> (i % 8);
    }
    b
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeOutcome {
    Seed,
    NonSeed,
    NoBitfield,
    Refused,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub endpoint: SocketAddr,
    pub outcome: ProbeOutcome,
    /// Present iff the outcome is `seed` or `non_seed`.
    pub pieces_have: Option<u64>,
    pub probed_at: UnixTime,
}

/// Runs a probe over an established connection.
pub fn probe_stream<S: Read + Write>(
    stream: &mut S,
    infohash: InfoHash,
    peer_id: [u8; 20],
    piece_count: u64,
) -> (ProbeOutcome, Option<u64>) {
    match exchange(stream, infohash, peer_id) {
        Ok(Message::Bitfield(bits)) => match count_pieces(&bits, piece_count) {
            Ok(n) if n == piece_count => (ProbeOutcome::Seed, Some(n)),
            Ok(n) => (ProbeOutcome::NonSeed, Some(n)),
            Err(e) => {
                log::debug!("probe: {e}");
                (ProbeOutcome::NoBitfield, None)
            }
        },
        Ok(_) => (ProbeOutcome::NoBitfield, None),
        Err(e) => match e.kind() {
            io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock => (ProbeOutcome::Timeout, None),
            io::ErrorKind::ConnectionRefused => (ProbeOutcome::Refused, None),
            _ => (ProbeOutcome::NoBitfield, None),
        },
    }
}

// Returns the peer's first non-keep-alive message.
fn exchange<S: Read + Write>(stream: &mut S, infohash: InfoHash, peer_id: [u8; 20]) -> io::Result<Message> {
    stream.write_all(&Handshake::new(infohash, peer_id).encode())?;
    stream.flush()?;
    let mut theirs = [0u8; HANDSHAKE_LEN];
    stream.read_exact(&mut theirs)?;
    let hs = Handshake::decode(&theirs).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    if hs.infohash != infohash {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "infohash mismatch"));
    }
    loop {
        match Message::read_from(stream)? {
            Message::KeepAlive => continue,
            m => return Ok(m),
        }
    }
}

pub trait Prober: Sync {
    fn probe(&self, endpoint: SocketAddr, infohash: InfoHash, piece_count: u64) -> ProbeResult;

    /// Probes a batch of endpoints; results keep the input order.
    fn probe_many(&self, endpoints: &[SocketAddr], infohash: InfoHash, piece_count: u64) -> Vec<ProbeResult> {
        probe_all(self, endpoints, infohash, piece_count)
    }
}

/// Probes every endpoint concurrently, one thread per endpoint. Results keep
/// the order of `endpoints`.
pub fn probe_all<P: Prober + ?Sized>(
    prober: &P,
    endpoints: &[SocketAddr],
    infohash: InfoHash,
    piece_count: u64,
) -> Vec<ProbeResult> {
    std::thread::scope(|s| {
        let handles: Vec<_> = endpoints
            .iter()
            .map(|&ep| s.spawn(move || prober.probe(ep, infohash, piece_count)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("probe thread panicked"))
            .collect()
    })
}

/// Probes over real TCP connections.
pub struct TcpProber<C: Clock> {
    pub peer_id: [u8; 20],
    pub timeout: Duration,
    pub clock: C,
}

impl<C: Clock> Prober for TcpProber<C> {
    fn probe(&self, endpoint: SocketAddr, infohash: InfoHash, piece_count: u64) -> ProbeResult {
        let probed_at = self.clock.now();
        let result = |outcome, pieces_have| ProbeResult {
            endpoint,
            outcome,
            pieces_have,
            probed_at,
        };
        let mut stream = match TcpStream::connect_timeout(&endpoint, self.timeout) {
            Ok(s) => s,
            Err(e) if e.kind() == io::ErrorKind::TimedOut => return result(ProbeOutcome::Timeout, None),
            Err(_) => return result(ProbeOutcome::Refused, None),
        };
        if stream.set_read_timeout(Some(self.timeout)).is_err() || stream.set_write_timeout(Some(self.timeout)).is_err()
        {
            return result(ProbeOutcome::Timeout, None);
        }
        let (outcome, pieces) = probe_stream(&mut stream, infohash, self.peer_id, piece_count);
        let _ = stream.shutdown(std::net::Shutdown::Both);
        result(outcome, pieces)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::ManualClock;
    use std::io::Cursor;
    use std::net::TcpListener;

    #[test]
    fn seed_bits() {
        assert_eq!(is_seed(&[0xFF], 8), Ok(true));
        assert_eq!(is_seed(&[0xFE], 8), Ok(false));
        assert_eq!(is_seed(&[0xF0], 4), Ok(true));
        assert_eq!(is_seed(&[0xFF, 0x80], 9), Ok(true));
        assert_eq!(is_seed(&[0xFF, 0x7F], 9), Ok(false));
        assert!(matches!(
            is_seed(&[0xFF], 9),
            Err(WireError::LengthMismatch { expected: 2, .. })
        ));
        assert_eq!(count_pieces(&bitfield_with_prefix(8, 3), 8), Ok(3));
    }

    #[test]
    fn handshake_layout() {
        let hs = Handshake::new(InfoHash([1; 20]), [2; 20]);
        let b = hs.encode();
        assert_eq!(b[0], 19);
        assert_eq!(&b[1..20], b"BitTorrent protocol");
        assert_eq!(&b[20..28], &[0u8; 8]);
        assert_eq!(Handshake::decode(&b).unwrap(), hs);
    }

    #[test]
    fn message_framing() {
        for m in [
            Message::KeepAlive,
            Message::Unchoke,
            Message::Have(77),
            Message::Bitfield(vec![0xAA, 0x80]),
            Message::Other {
                id: 20,
                payload: vec![1, 2],
            },
        ] {
            let bytes = m.encode();
            assert_eq!(Message::read_from(&mut Cursor::new(bytes)).unwrap(), m);
        }
        assert_eq!(Message::Bitfield(vec![0xFF]).encode(), vec![0, 0, 0, 2, 5, 0xFF]);
    }

    /// Scripted peer: replies with a prepared byte stream and records writes.
    struct Scripted {
        reply: Cursor<Vec<u8>>,
        written: Vec<u8>,
    }

    impl Read for Scripted {
        fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
            self.reply.read(buf)
        }
    }

    impl Write for Scripted {
        fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
            self.written.extend_from_slice(buf);
            Ok(buf.len())
        }
        fn flush(&mut self) -> io::Result<()> {
            Ok(())
        }
    }

    fn peer(infohash: InfoHash, msgs: &[Message]) -> Scripted {
        let mut reply = Handshake::new(infohash, [9; 20]).encode().to_vec();
        for m in msgs {
            reply.extend(m.encode());
        }
        Scripted {
            reply: Cursor::new(reply),
            written: vec![],
        }
    }

    #[test]
    fn probe_outcomes() {
        let ih = InfoHash([3; 20]);
        let mut seed = peer(ih, &[Message::KeepAlive, Message::Bitfield(vec![0xFF])]);
        assert_eq!(probe_stream(&mut seed, ih, [4; 20], 8), (ProbeOutcome::Seed, Some(8)));
        assert_eq!(seed.written, Handshake::new(ih, [4; 20]).encode().to_vec());

        let mut leech = peer(ih, &[Message::Bitfield(bitfield_with_prefix(8, 3))]);
        assert_eq!(
            probe_stream(&mut leech, ih, [4; 20], 8),
            (ProbeOutcome::NonSeed, Some(3))
        );

        let mut haver = peer(ih, &[Message::Have(0), Message::Have(1)]);
        assert_eq!(
            probe_stream(&mut haver, ih, [4; 20], 8),
            (ProbeOutcome::NoBitfield, None)
        );

        let mut wrong = peer(InfoHash([5; 20]), &[Message::Bitfield(vec![0xFF])]);
        assert_eq!(probe_stream(&mut wrong, ih, [4; 20], 8).0, ProbeOutcome::NoBitfield);

        let mut silent = peer(ih, &[]);
        assert_eq!(probe_stream(&mut silent, ih, [4; 20], 8).0, ProbeOutcome::NoBitfield);
    }

    #[test]
    fn tcp_seed_and_refused() {
        let ih = InfoHash([6; 20]);
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (mut s, _) = listener.accept().unwrap();
            let mut hs = [0u8; HANDSHAKE_LEN];
            s.read_exact(&mut hs).unwrap();
            s.write_all(&Handshake::new(ih, [8; 20]).encode()).unwrap();
            s.write_all(&Message::Bitfield(vec![0xFF, 0xC0]).encode()).unwrap();
            // anything after the handshake would be a neutrality violation
            let mut rest = Vec::new();
            s.read_to_end(&mut rest).unwrap();
            rest
        });
        let prober = TcpProber {
            peer_id: [1; 20],
            timeout: Duration::from_secs(5),
            clock: ManualClock::new(99),
        };
        let r = prober.probe(addr, ih, 10);
        assert_eq!(r.outcome, ProbeOutcome::Seed);
        assert_eq!(r.pieces_have, Some(10));
        assert_eq!(r.probed_at, 99);
        assert!(server.join().unwrap().is_empty());

        let closed = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
        assert_eq!(prober.probe(closed, ih, 10).outcome, ProbeOutcome::Refused);
    }

    #[test]
    fn tcp_timeout() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let prober = TcpProber {
            peer_id: [1; 20],
            timeout: Duration::from_millis(200),
            clock: ManualClock::new(0),
        };
        // accepted by the backlog but never answered
        let r = prober.probe(addr, InfoHash([0; 20]), 8);
        assert_eq!(r.outcome, ProbeOutcome::Timeout);
        assert_eq!(r.pieces_have, None);
        drop(listener);
    }
}
