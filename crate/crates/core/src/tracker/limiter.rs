use std::collections::HashMap;
use std::sync::Mutex;

use crate::bencode::InfoHash;
use crate::time::{Seconds, UnixTime, MINUTE};

/// Lower bound of the observed tracker tolerance of one query every 10 to 15 minutes.
pub const DEFAULT_MIN_INTERVAL: Seconds = 10 * MINUTE;

// (vantage, tracker url, swarm)
type SlotKey = (String, String, Option<InfoHash>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Proceed,
    WaitUntil(UnixTime),
}

/// Per-(vantage, tracker) query spacing, shared by every swarm worker.
///
/// Trackers pace each client per torrent, so swarm workers use
/// [`RateLimiter::acquire_swarm`], which keeps one slot per swarm on the
/// tracker. [`RateLimiter::acquire`] spaces every query to the tracker.
#[derive(Debug)]
pub struct RateLimiter {
    default_interval: Seconds,
    overrides: HashMap<String, Seconds>,
    last: Mutex<HashMap<SlotKey, UnixTime>>,
}

impl Default for RateLimiter {
    fn default() -> Self {
        Self::new(DEFAULT_MIN_INTERVAL)
    }
}

impl RateLimiter {
    pub fn new(default_interval: Seconds) -> Self {
        Self {
            default_interval,
            overrides: HashMap::new(),
            last: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_interval(mut self, tracker_url: &str, interval: Seconds) -> Self {
        self.overrides.insert(tracker_url.to_owned(), interval);
        self
    }

    pub fn min_interval(&self, tracker_url: &str) -> Seconds {
        self.overrides
            .get(tracker_url)
            .copied()
            .unwrap_or(self.default_interval)
    }

    /// Grants the slot and records `now` when the spacing allows it.
    pub fn acquire(&self, vantage: &str, tracker_url: &str, now: UnixTime) -> Decision {
        self.acquire_key(vantage, tracker_url, None, now)
    }

    /// Like [`RateLimiter::acquire`], for queries about one swarm.
    pub fn acquire_swarm(&self, vantage: &str, tracker_url: &str, infohash: InfoHash, now: UnixTime) -> Decision {
        self.acquire_key(vantage, tracker_url, Some(infohash), now)
    }

    fn acquire_key(&self, vantage: &str, tracker_url: &str, swarm: Option<InfoHash>, now: UnixTime) -> Decision {
        let interval = self.min_interval(tracker_url);
        let mut last = self.last.lock().expect("limiter lock");
        let key = (vantage.to_owned(), tracker_url.to_owned(), swarm);
        match last.get(&key) {
            Some(&prev) if now - prev < interval => Decision::WaitUntil(prev + interval),
            _ => {
                last.insert(key, now);
                Decision::Proceed
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing() {
        let l = RateLimiter::default();
        assert_eq!(l.acquire("v", "http://a", 1000), Decision::Proceed);
        assert_eq!(l.acquire("v", "http://a", 1300), Decision::WaitUntil(1600));
        assert_eq!(l.acquire("v", "http://b", 1300), Decision::Proceed);
        assert_eq!(l.acquire("w", "http://a", 1300), Decision::Proceed);
        assert_eq!(l.acquire("v", "http://a", 1600), Decision::Proceed);
    }

    #[test]
    fn swarms_have_separate_slots() {
        let l = RateLimiter::default();
        let (a, b) = (InfoHash([1; 20]), InfoHash([2; 20]));
        assert_eq!(l.acquire_swarm("v", "http://a", a, 0), Decision::Proceed);
        assert_eq!(l.acquire_swarm("v", "http://a", b, 0), Decision::Proceed);
        assert_eq!(l.acquire_swarm("v", "http://a", a, 10), Decision::WaitUntil(600));
    }

    #[test]
    fn per_tracker_override() {
        let l = RateLimiter::default().with_interval("http://slow", 15 * MINUTE);
        assert_eq!(l.min_interval("http://slow"), 900);
        assert_eq!(l.acquire("v", "http://slow", 0), Decision::Proceed);
        assert_eq!(l.acquire("v", "http://slow", 600), Decision::WaitUntil(900));
    }

    #[test]
    fn concurrent_acquire_grants_once() {
        let l = std::sync::Arc::new(RateLimiter::default());
        let granted: usize = std::thread::scope(|s| {
            let hs: Vec<_> = (0..8)
                .map(|_| s.spawn(|| l.acquire("v", "http://a", 5) == Decision::Proceed))
                .collect();
            hs.into_iter().map(|h| h.join().unwrap() as usize).sum()
        });
        assert_eq!(granted, 1);
    }
}
