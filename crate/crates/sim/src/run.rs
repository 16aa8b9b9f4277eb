use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::{Arc, Mutex};

use seedscope_core::ingest::{fetch_torrent, poll, IngestState, PortalProfile, RetryPolicy};
use seedscope_core::monitor::{vantage_offsets, MonitorConfig, PollStep, SwarmTask, TerminalOutcome};
use seedscope_core::store::{EventBody, EventSink, FeedItemEvent, PortalRemoval, StoreError};
use seedscope_core::time::{Clock, ManualClock, UnixTime};
use seedscope_core::tracker::{RateLimiter, Vantage};

use crate::net::{portal_profile, QueryRecord, SimProber, SimTransport};
use crate::truth::RunCounts;
use crate::world::World;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Action {
    PollFeed,
    Query { task: usize, vantage: usize },
    Removal { publisher: usize },
}

/// Counts appended events by kind on the way to the real sink.
struct Counting<'a> {
    inner: &'a dyn EventSink,
    counts: Mutex<RunCounts>,
}

impl EventSink for Counting<'_> {
    fn append(&self, ts: UnixTime, body: EventBody) -> Result<u64, StoreError> {
        let kind = body.kind().as_str();
        let seq = self.inner.append(ts, body)?;
        *self
            .counts
            .lock()
            .expect("counts")
            .events
            .entry(kind.to_owned())
            .or_default() += 1;
        Ok(seq)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOutcome {
    pub counts: RunCounts,
    /// Every announce the tracker answered, in order.
    pub queries: Vec<QueryRecord>,
    pub swarms: usize,
    pub aborted: usize,
    pub ended_at: UnixTime,
}

/// Monitor settings the simulated deployment uses.
pub fn monitor_config(world: &World) -> MonitorConfig {
    let m = &world.config.monitor;
    MonitorConfig {
        vantages: (0..m.vantages)
            .map(|i| Vantage::new(format!("v{i}"), 6881 + i as u16))
            .collect(),
        id_retry_window: m.id_retry_window.0,
        first_query_delay: m.first_query_delay.0,
        ..MonitorConfig::default()
    }
}

/// Runs the monitoring pipeline against `world` in virtual time: the feed
/// poller, per-swarm vantage rotation under the rate limiter, publisher
/// identification and termination, all through the production code paths.
/// Portal removals from the ground truth are logged when they happen.
///
/// With `until`, swarms still monitored at that instant end as aborted.
pub fn run_simulation(
    world: Arc<World>,
    sink: &dyn EventSink,
    until: Option<UnixTime>,
) -> Result<RunOutcome, StoreError> {
    let clock = Arc::new(ManualClock::new(world.config.start));
    let transport = SimTransport::new(world.clone(), clock.clone());
    let prober = SimProber::new(world.clone(), clock.clone());
    let sink = Counting {
        inner: sink,
        counts: Mutex::new(RunCounts::default()),
    };
    let cfg = monitor_config(&world);
    let interval = world.config.monitor.min_interval.0;
    let limiter = RateLimiter::new(interval);
    let profile: PortalProfile = portal_profile(&world);
    let retry = RetryPolicy::default();
    let last_listing = world
        .listing
        .last()
        .map_or(world.config.start, |&i| world.torrents[i].item.published_at);

    let mut queue: BinaryHeap<Reverse<(UnixTime, u64, Action)>> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut push = |q: &mut BinaryHeap<_>, t: UnixTime, a: Action| {
        q.push(Reverse((t, seq, a)));
        seq += 1;
    };
    push(&mut queue, world.config.start, Action::PollFeed);
    for (i, p) in world.publishers.iter().enumerate() {
        if let Some(t) = p.removed_at {
            push(&mut queue, t, Action::Removal { publisher: i });
        }
    }

    let mut state = IngestState::default();
    let mut tasks: Vec<SwarmTask> = Vec::new();
    let mut out = RunOutcome::default();
    while let Some(Reverse((t, _, action))) = queue.pop() {
        if until.is_some_and(|u| t > u) {
            break;
        }
        clock.set(t.max(clock.now()));
        let now = clock.now();
        match action {
            Action::PollFeed => {
                let polled = poll(&transport, &profile, &mut state, &*clock, retry);
                if let Some(e) = polled.error {
                    log::warn!("simulated feed poll failed: {e}");
                }
                for item in polled.new_items {
                    let fetched = fetch_torrent(&transport, &item, &*clock, retry);
                    let username = item.username.clone();
                    let (torrent, failure) = match fetched {
                        Ok(m) => (Some(m), None),
                        Err(e) => (None, Some(e)),
                    };
                    sink.append(
                        clock.now(),
                        EventBody::FeedItem(FeedItemEvent {
                            item,
                            torrent: torrent.clone(),
                            failure,
                        }),
                    )?;
                    if let Some(meta) = torrent {
                        let start = clock.now() + cfg.first_query_delay;
                        tasks.push(SwarmTask::new(meta, username, start));
                        let task = tasks.len() - 1;
                        for (vantage, at) in vantage_offsets(start, interval, cfg.vantages.len())
                            .into_iter()
                            .enumerate()
                        {
                            push(&mut queue, at, Action::Query { task, vantage });
                        }
                    }
                }
                if now <= last_listing {
                    push(&mut queue, now + profile.poll_interval_s.max(1), Action::PollFeed);
                }
            }
            Action::Query { task, vantage } => {
                let step =
                    tasks[task].poll_once(&cfg.vantages[vantage], now, &cfg, &transport, &limiter, &prober, &sink)?;
                match step {
                    PollStep::Wait(at) => push(&mut queue, at, action),
                    PollStep::Snapshot(_) | PollStep::Failed(_) => push(&mut queue, now + interval, action),
                    PollStep::Finished(_) => {}
                }
            }
            Action::Removal { publisher } => {
                sink.append(
                    now,
                    EventBody::PortalRemoval(PortalRemoval {
                        portal_id: world.config.portal.portal_id.clone(),
                        username: world.publishers[publisher].username.clone(),
                    }),
                )?;
            }
        }
    }
    let end = until.unwrap_or_else(|| clock.now()).max(clock.now());
    for task in &mut tasks {
        if task.status().is_none() {
            task.finish(TerminalOutcome::Aborted, end, &sink)?;
        }
    }
    out.swarms = tasks.len();
    out.aborted = tasks
        .iter()
        .filter(|t| t.status().is_some_and(|s| s.outcome == TerminalOutcome::Aborted))
        .count();
    out.ended_at = end;
    out.queries = transport.queries();
    out.counts = sink.counts.into_inner().expect("counts");
    Ok(out)
}
