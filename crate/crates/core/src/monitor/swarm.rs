use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use super::identify::{identify_initial_publisher, NoIpReason, PublisherIdentification};
use crate::bencode::{InfoHash, TorrentMeta};
use crate::peer_wire::Prober;
use crate::store::{EventBody, EventSink, ProbeEvent, StoreError};
use crate::time::{Clock, Seconds, UnixTime, DAY};
use crate::tracker::{build_announce, parse_announce_response, AnnounceResult, Decision, RateLimiter, Vantage};
use crate::transport::Transport;

/// Consecutive empty replies after which a swarm is considered dead.
pub const EMPTY_REPLIES_TO_STOP: usize = 10;
pub const DEFAULT_DEAD_TIME: Seconds = DAY;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwarmSnapshot {
    pub infohash: InfoHash,
    pub observed_at: UnixTime,
    pub vantage_id: String,
    pub seeders: u32,
    pub leechers: u32,
    pub peers: Vec<SocketAddr>,
    /// True iff `peers` is empty.
    pub empty: bool,
}

impl SwarmSnapshot {
    pub fn from_result(infohash: InfoHash, r: &AnnounceResult) -> Self {
        Self {
            infohash,
            observed_at: r.received_at,
            vantage_id: r.vantage_id.clone(),
            seeders: r.seeders,
            leechers: r.leechers,
            peers: r.peers.clone(),
            empty: r.peers.is_empty(),
        }
    }
}

/// True iff the last [`EMPTY_REPLIES_TO_STOP`] snapshots, in merged order, are all empty.
pub fn should_terminate(history: &[SwarmSnapshot]) -> bool {
    history.len() >= EMPTY_REPLIES_TO_STOP && history[history.len() - EMPTY_REPLIES_TO_STOP..].iter().all(|s| s.empty)
}

#[derive(Debug, Clone)]
pub struct MonitorConfig {
    pub vantages: Vec<Vantage>,
    pub numwant: Option<u32>,
    /// Continuous failure on every vantage for this long aborts the swarm.
    pub dead_time: Seconds,
    /// How long after the first announce a failed identification is retried.
    pub id_retry_window: Seconds,
    /// Delay between fetching the `.torrent` and the first announce.
    pub first_query_delay: Seconds,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            vantages: vec![Vantage::new("v0", 6881)],
            numwant: None,
            dead_time: DEFAULT_DEAD_TIME,
            id_retry_window: 0,
            first_query_delay: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalOutcome {
    /// Ten consecutive empty replies.
    Completed,
    /// The tracker stayed unreachable for longer than the dead time.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TerminalStatus {
    pub infohash: InfoHash,
    pub outcome: TerminalOutcome,
    pub snapshots: u64,
    pub started_at: UnixTime,
    pub ended_at: UnixTime,
}

impl TerminalStatus {
    pub fn duration(&self) -> Seconds {
        self.ended_at - self.started_at
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PollStep {
    /// A snapshot was recorded.
    Snapshot(AnnounceResult),
    /// The announce failed; the rate slot was still spent.
    Failed(String),
    /// The limiter refused; try this vantage again at the given time.
    Wait(UnixTime),
    /// The swarm has reached its terminal status.
    Finished(TerminalStatus),
}

/// State of one monitored swarm. Drivers call [`SwarmTask::poll_once`] with a
/// vantage whenever that vantage is due.
#[derive(Debug, Clone)]
pub struct SwarmTask {
    meta: TorrentMeta,
    username: String,
    identification: Option<PublisherIdentification>,
    first_contact: Option<UnixTime>,
    started_at: UnixTime,
    last_success_at: UnixTime,
    trailing_empty: usize,
    snapshots: u64,
    last_observed: Option<(UnixTime, String)>,
    status: Option<TerminalStatus>,
}

impl SwarmTask {
    pub fn new(meta: TorrentMeta, username: impl Into<String>, started_at: UnixTime) -> Self {
        Self {
            meta,
            username: username.into(),
            identification: None,
            first_contact: None,
            started_at,
            last_success_at: started_at,
            trailing_empty: 0,
            snapshots: 0,
            last_observed: None,
            status: None,
        }
    }

    pub fn meta(&self) -> &TorrentMeta {
        &self.meta
    }

    pub fn started_at(&self) -> UnixTime {
        self.started_at
    }

    pub fn status(&self) -> Option<&TerminalStatus> {
        self.status.as_ref()
    }

    pub fn identification(&self) -> Option<&PublisherIdentification> {
        self.identification.as_ref()
    }

    /// Acquires a rate slot for `vantage`, announces, records the snapshot and
    /// checks for termination. The first successful reply also identifies the
    /// initial publisher. Errors only when the sink fails; the caller then
    /// aborts the task.
    #[allow(clippy::too_many_arguments)]
    pub fn poll_once(
        &mut self,
        vantage: &Vantage,
        now: UnixTime,
        cfg: &MonitorConfig,
        transport: &dyn Transport,
        limiter: &RateLimiter,
        prober: &dyn Prober,
        sink: &dyn EventSink,
    ) -> Result<PollStep, StoreError> {
        if let Some(s) = &self.status {
            return Ok(PollStep::Finished(s.clone()));
        }
        if let Decision::WaitUntil(t) =
            limiter.acquire_swarm(&vantage.id, &self.meta.announce_url, self.meta.infohash, now)
        {
            return Ok(PollStep::Wait(t));
        }
        let (_, url) = build_announce(&self.meta, vantage, cfg.numwant);
        let outcome = transport
            .get(&url)
            .map_err(|e| e.to_string())
            .and_then(|body| parse_announce_response(&body, &vantage.id, now).map_err(|e| e.to_string()));
        match outcome {
            Ok(result) => {
                self.record(&result, sink)?;
                self.maybe_identify(&result, now, cfg, prober, sink)?;
                if self.trailing_empty >= EMPTY_REPLIES_TO_STOP {
                    let st = self.finish(TerminalOutcome::Completed, now, sink)?;
                    return Ok(PollStep::Finished(st));
                }
                Ok(PollStep::Snapshot(result))
            }
            Err(msg) => {
                log::debug!("{} via {}: {msg}", self.meta.infohash, vantage.id);
                if now - self.last_success_at >= cfg.dead_time {
                    let st = self.finish(TerminalOutcome::Aborted, now, sink)?;
                    return Ok(PollStep::Finished(st));
                }
                Ok(PollStep::Failed(msg))
            }
        }
    }

    fn record(&mut self, result: &AnnounceResult, sink: &dyn EventSink) -> Result<(), StoreError> {
        let snap = SwarmSnapshot::from_result(self.meta.infohash, result);
        let key = (snap.observed_at, snap.vantage_id.clone());
        if let Some(prev) = &self.last_observed {
            debug_assert!(*prev < key, "snapshots out of order: {prev:?} then {key:?}");
        }
        let empty = snap.empty;
        sink.append(snap.observed_at, EventBody::Snapshot(snap))?;
        self.last_observed = Some(key);
        self.last_success_at = result.received_at;
        self.snapshots += 1;
        self.trailing_empty = if empty { self.trailing_empty + 1 } else { 0 };
        Ok(())
    }

    fn maybe_identify(
        &mut self,
        result: &AnnounceResult,
        now: UnixTime,
        cfg: &MonitorConfig,
        prober: &dyn Prober,
        sink: &dyn EventSink,
    ) -> Result<(), StoreError> {
        let first = *self.first_contact.get_or_insert(now);
        let retry = match &self.identification {
            None => false,
            Some(id) => {
                id.ip.is_none()
                    && now - first < cfg.id_retry_window
                    && matches!(id.reason_no_ip, Some(NoIpReason::NoSeedReported | NoIpReason::Nat))
            }
        };
        if self.identification.is_some() && !retry {
            return Ok(());
        }
        let out = identify_initial_publisher(&self.meta, &self.username, result, prober);
        for p in out.probes {
            sink.append(
                p.probed_at,
                EventBody::Probe(ProbeEvent {
                    infohash: self.meta.infohash,
                    result: p,
                }),
            )?;
        }
        // retries only log an identification that improves on the first
        if !retry || out.identification.ip.is_some() {
            sink.append(now, EventBody::Identification(out.identification.clone()))?;
            self.identification = Some(out.identification);
        }
        Ok(())
    }

    /// Ends monitoring with `outcome` and logs the terminal status. Idempotent.
    pub fn finish(
        &mut self,
        outcome: TerminalOutcome,
        now: UnixTime,
        sink: &dyn EventSink,
    ) -> Result<TerminalStatus, StoreError> {
        if let Some(s) = &self.status {
            return Ok(s.clone());
        }
        let st = TerminalStatus {
            infohash: self.meta.infohash,
            outcome,
            snapshots: self.snapshots,
            started_at: self.started_at,
            ended_at: now.max(self.started_at),
        };
        sink.append(st.ended_at, EventBody::TerminalStatus(st.clone()))?;
        self.status = Some(st.clone());
        Ok(st)
    }
}

/// First due time of each vantage: spread evenly over one rate interval.
pub fn vantage_offsets(start: UnixTime, interval: Seconds, vantages: usize) -> Vec<UnixTime> {
    let k = vantages.max(1) as i64;
    (0..k).map(|i| start + i * interval / k).collect()
}

/// Monitors one swarm to its terminal status, sleeping on `clock` between
/// queries. Vantages take turns, each as often as the limiter allows.
pub fn run_swarm(
    task: &mut SwarmTask,
    cfg: &MonitorConfig,
    clock: &dyn Clock,
    transport: &dyn Transport,
    limiter: &RateLimiter,
    prober: &dyn Prober,
    sink: &dyn EventSink,
) -> Result<TerminalStatus, StoreError> {
    run_swarm_until(
        task,
        cfg,
        clock,
        transport,
        limiter,
        prober,
        sink,
        &AtomicBool::new(false),
    )
}

/// [`run_swarm`] that also ends, as aborted, once `stop` is set.
#[allow(clippy::too_many_arguments)]
pub fn run_swarm_until(
    task: &mut SwarmTask,
    cfg: &MonitorConfig,
    clock: &dyn Clock,
    transport: &dyn Transport,
    limiter: &RateLimiter,
    prober: &dyn Prober,
    sink: &dyn EventSink,
    stop: &AtomicBool,
) -> Result<TerminalStatus, StoreError> {
    assert!(!cfg.vantages.is_empty(), "at least one vantage required");
    let interval = limiter.min_interval(&task.meta.announce_url);
    let mut due = vantage_offsets(clock.now(), interval, cfg.vantages.len());
    loop {
        let (i, &at) = due.iter().enumerate().min_by_key(|&(i, &t)| (t, i)).expect("non-empty");
        loop {
            if stop.load(Ordering::Relaxed) {
                return task.finish(TerminalOutcome::Aborted, clock.now(), sink);
            }
            let now = clock.now();
            if at <= now {
                break;
            }
            clock.sleep((at - now).min(STOP_CHECK));
        }
        let now = clock.now();
        match task.poll_once(&cfg.vantages[i], now, cfg, transport, limiter, prober, sink) {
            Ok(PollStep::Finished(st)) => return Ok(st),
            Ok(PollStep::Wait(t)) => due[i] = t.max(now + 1),
            Ok(PollStep::Snapshot(_) | PollStep::Failed(_)) => due[i] = now + interval,
            Err(e) => {
                log::error!("{}: sink failed, aborting: {e}", task.meta.infohash);
                return Err(e);
            }
        }
    }
}

// Longest uninterrupted sleep before the stop flag is checked again.
const STOP_CHECK: Seconds = 5;
