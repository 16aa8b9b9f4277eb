use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use super::swarm::{run_swarm_until, MonitorConfig, SwarmTask};
use crate::ingest::{fetch_torrent, poll, FeedItem, IngestState, PortalProfile, RetryPolicy};
use crate::peer_wire::Prober;
use crate::store::{EventBody, EventSink, FeedItemEvent, StoreError};
use crate::time::Clock;
use crate::tracker::RateLimiter;
use crate::transport::Transport;

#[derive(Debug, Clone)]
pub struct LiveOptions {
    pub profile: PortalProfile,
    pub monitor: MonitorConfig,
    pub retry: RetryPolicy,
    /// Where the seen-item set persists between runs.
    pub state_path: Option<PathBuf>,
    /// Stop polling the feed after this many polls; `None` runs until stopped.
    pub max_polls: Option<u64>,
}

/// Shared services for a live run.
#[derive(Clone)]
pub struct LiveDeps {
    pub transport: Arc<dyn Transport>,
    pub clock: Arc<dyn Clock>,
    pub prober: Arc<dyn Prober + Send>,
    pub limiter: Arc<RateLimiter>,
    pub sink: Arc<dyn EventSink + Send>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LiveSummary {
    pub polls: u64,
    pub items: u64,
    pub swarms_finished: u64,
}

/// Polls the portal feed and monitors every new torrent on its own thread
/// until `stop` is set or `max_polls` is reached; then waits for running
/// swarms to finish (they end as aborted once `stop` is set).
pub fn run_live(opts: &LiveOptions, deps: &LiveDeps, stop: Arc<AtomicBool>) -> Result<LiveSummary, StoreError> {
    let mut state = match &opts.state_path {
        Some(p) => IngestState::load(p)?,
        None => IngestState::default(),
    };
    let finished = Arc::new(AtomicU64::new(0));
    let mut workers: Vec<JoinHandle<Result<(), StoreError>>> = Vec::new();
    let mut summary = LiveSummary::default();
    loop {
        let out = poll(&*deps.transport, &opts.profile, &mut state, &*deps.clock, opts.retry);
        summary.polls += 1;
        if let Some(e) = &out.error {
            log::warn!("{}: poll failed: {e}", opts.profile.portal_id);
        }
        for item in out.new_items {
            summary.items += 1;
            let (deps, opts, stop, finished) = (deps.clone(), opts.clone(), stop.clone(), finished.clone());
            workers.push(std::thread::spawn(move || {
                let r = monitor_item(item, &opts, &deps, &stop);
                finished.fetch_add(1, Ordering::Relaxed);
                r
            }));
        }
        if let Some(p) = &opts.state_path {
            state.save(p)?;
        }
        workers.retain(|h| !h.is_finished());
        if stop.load(Ordering::Relaxed) || opts.max_polls.is_some_and(|n| summary.polls >= n) {
            break;
        }
        let mut left = opts.profile.poll_interval_s.max(1);
        while left > 0 && !stop.load(Ordering::Relaxed) {
            let step = left.min(5);
            deps.clock.sleep(step);
            left -= step;
        }
    }
    for h in workers {
        match h.join() {
            Ok(r) => r?,
            Err(_) => log::error!("swarm worker panicked"),
        }
    }
    summary.swarms_finished = finished.load(Ordering::Relaxed);
    Ok(summary)
}

/// Fetches the item's `.torrent`, logs the feed item, and monitors the swarm.
pub fn monitor_item(item: FeedItem, opts: &LiveOptions, deps: &LiveDeps, stop: &AtomicBool) -> Result<(), StoreError> {
    let fetched = fetch_torrent(&*deps.transport, &item, &*deps.clock, opts.retry);
    let now = deps.clock.now();
    let username = item.username.clone();
    let (torrent, failure) = match fetched {
        Ok(m) => (Some(m), None),
        Err(e) => {
            log::warn!("{}: {e}", item.torrent_url);
            (None, Some(e))
        }
    };
    deps.sink.append(
        now,
        EventBody::FeedItem(FeedItemEvent {
            item,
            torrent: torrent.clone(),
            failure,
        }),
    )?;
    let Some(meta) = torrent else { return Ok(()) };
    if opts.monitor.first_query_delay > 0 {
        deps.clock.sleep(opts.monitor.first_query_delay);
    }
    let mut task = SwarmTask::new(meta, username, deps.clock.now());
    let st = run_swarm_until(
        &mut task,
        &opts.monitor,
        &*deps.clock,
        &*deps.transport,
        &deps.limiter,
        &*deps.prober,
        &*deps.sink,
        stop,
    )?;
    log::info!(
        "{}: {:?} after {} snapshots over {}s",
        st.infohash,
        st.outcome,
        st.snapshots,
        st.duration()
    );
    Ok(())
}
