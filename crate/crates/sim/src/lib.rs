//! A deterministic simulated portal, tracker and set of swarms.
//!
//! [`generate_world`] turns a [`WorldConfig`] into a [`World`] (every peer's
//! arrival, departure and completion is fixed up front) and the matching
//! [`GroundTruth`]. [`SimTransport`] and [`SimProber`] expose the world
//! through the same interfaces the live monitor uses, and [`run_simulation`]
//! drives the production pipeline against it in virtual time.

pub mod config;
pub mod isp;
mod net;
mod run;
pub mod truth;
mod world;

pub use config::{ConfigError, Role, WorldConfig};
pub use net::{portal_profile, QueryRecord, SimProber, SimTransport};
pub use run::{monitor_config, run_simulation, RunOutcome};
pub use truth::{GroundTruth, RunCounts, TruthPublisher, TruthTorrent};
pub use world::{
    generate_world, sim_announce, PeerKind, Shape, SimError, SimPeer, SimPublisher, SimTorrent, SwarmState, World,
    TRACKER_INTERVAL,
};

/// A random stream for tests and tools that need one, derived like the
/// world's internal streams.
pub fn rng_stream(seed: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
    world::stream(seed, stream)
}
