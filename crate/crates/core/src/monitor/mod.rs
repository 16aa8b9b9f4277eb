//! Per-swarm lifecycle: publisher identification at birth, periodic
//! multi-vantage polling, and termination.

mod identify;
mod live;
mod swarm;

pub use identify::{
    identify_initial_publisher, IdMethod, Identified, NoIpReason, PublisherIdentification, MAX_PROBE_PEERS,
};
pub use live::{monitor_item, run_live, LiveDeps, LiveOptions, LiveSummary};
pub use swarm::{
    run_swarm, run_swarm_until, should_terminate, vantage_offsets, MonitorConfig, PollStep, SwarmSnapshot, SwarmTask,
    TerminalOutcome, TerminalStatus, DEFAULT_DEAD_TIME, EMPTY_REPLIES_TO_STOP,
};
