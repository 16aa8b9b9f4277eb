//! Identification and characterization of BitTorrent content publishers.
//!
//! The pipeline watches portal feeds for new torrents, pins the initial
//! publisher's address from the first tracker contact, follows each swarm
//! through periodic multi-vantage tracker queries, and derives publisher
//! statistics from the resulting append-only event log.

pub mod analytics;
pub mod bencode;
pub mod ingest;
pub mod monitor;
pub mod peer_wire;
pub mod session;
pub mod store;
pub mod time;
pub mod tracker;
pub mod transport;

pub use bencode::{InfoHash, TorrentMeta};
