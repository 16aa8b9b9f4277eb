use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::feed::{parse_feed, FeedItem, ItemKey, PortalProfile, SkippedItem};
use crate::bencode::{parse_metainfo, TorrentMeta};
use crate::time::{Clock, Seconds, UnixTime};
use crate::transport::{Transport, TransportError};

/// Items already emitted, persisted between runs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestState {
    pub seen: BTreeSet<ItemKey>,
    pub last_poll_at: Option<UnixTime>,
}

impl IngestState {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        match std::fs::read(path) {
            Ok(bytes) => {
                serde_json::from_slice(&bytes).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(e),
        }
    }

    /// Writes via a temporary file and rename so a crash never leaves a torn file.
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec(self).expect("state serializes"))?;
        std::fs::rename(tmp, path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub attempts: u32,
    /// Delay before the second attempt; doubles afterwards.
    pub backoff: Seconds,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            backoff: 5,
        }
    }
}

impl RetryPolicy {
    fn run<T>(
        &self,
        clock: &dyn Clock,
        mut op: impl FnMut() -> Result<T, TransportError>,
    ) -> (Result<T, TransportError>, u32) {
        let mut delay = self.backoff;
        let mut attempt = 1;
        loop {
            match op() {
                Ok(v) => return (Ok(v), attempt),
                Err(e) if attempt >= self.attempts.max(1) => return (Err(e), attempt),
                Err(e) => {
                    log::debug!("attempt {attempt} failed: {e}; retrying in {delay}s");
                    clock.sleep(delay);
                    delay = delay.saturating_mul(2);
                    attempt += 1;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PollError {
    #[error("feed transport failed after {attempts} attempts: {source}")]
    Transport { source: TransportError, attempts: u32 },
    #[error("{0}")]
    Feed(String),
}

#[derive(Debug, Clone, Default)]
pub struct PollOutcome {
    pub new_items: Vec<FeedItem>,
    pub skipped: Vec<SkippedItem>,
    pub error: Option<PollError>,
}

/// Fetches the profile's feed and returns items not seen before. On failure
/// the state is left untouched.
pub fn poll(
    transport: &dyn Transport,
    profile: &PortalProfile,
    state: &mut IngestState,
    clock: &dyn Clock,
    retry: RetryPolicy,
) -> PollOutcome {
    let (body, attempts) = retry.run(clock, || transport.get(&profile.feed_url));
    let body = match body {
        Ok(b) => b,
        Err(source) => {
            return PollOutcome {
                error: Some(PollError::Transport { source, attempts }),
                ..Default::default()
            }
        }
    };
    let parsed = match parse_feed(&body, profile) {
        Ok(p) => p,
        Err(e) => {
            return PollOutcome {
                error: Some(PollError::Feed(e.to_string())),
                ..Default::default()
            }
        }
    };
    let mut new_items = Vec::new();
    for item in parsed.items {
        if state.seen.insert(item.key()) {
            new_items.push(item);
        }
    }
    state.last_poll_at = Some(clock.now());
    PollOutcome {
        new_items,
        skipped: parsed.skipped,
        error: None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum FetchFailure {
    #[error("transport: {message} after {attempts} attempts")]
    Transport { message: String, attempts: u32 },
    #[error("metainfo: {message}")]
    Parse { message: String },
}

/// Downloads and parses an item's `.torrent`. Transport errors are retried per
/// `retry`; parse errors are final.
pub fn fetch_torrent(
    transport: &dyn Transport,
    item: &FeedItem,
    clock: &dyn Clock,
    retry: RetryPolicy,
) -> Result<TorrentMeta, FetchFailure> {
    let (body, attempts) = retry.run(clock, || transport.get(&item.torrent_url));
    let body = body.map_err(|e| FetchFailure::Transport {
        message: e.to_string(),
        attempts,
    })?;
    parse_metainfo(&body).map_err(|e| FetchFailure::Parse { message: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::feed::render_feed;
    use crate::time::ManualClock;
    use std::collections::HashMap;
    use std::sync::Mutex;

    #[derive(Default)]
    struct FakeTransport {
        routes: Mutex<HashMap<String, Result<Vec<u8>, TransportError>>>,
        calls: Mutex<Vec<String>>,
    }

    impl FakeTransport {
        fn set(&self, url: &str, r: Result<Vec<u8>, TransportError>) {
            self.routes.lock().unwrap().insert(url.into(), r);
        }
        fn calls(&self, url: &str) -> usize {
            self.calls.lock().unwrap().iter().filter(|u| *u == url).count()
        }
    }

    impl Transport for FakeTransport {
        fn get(&self, url: &str) -> Result<Vec<u8>, TransportError> {
            self.calls.lock().unwrap().push(url.into());
            self.routes
                .lock()
                .unwrap()
                .get(url)
                .cloned()
                .unwrap_or(Err(TransportError::Status(404)))
        }
    }

    fn profile() -> PortalProfile {
        PortalProfile {
            portal_id: "p".into(),
            feed_url: "http://p/rss".into(),
            ..Default::default()
        }
    }

    fn item(n: u32) -> FeedItem {
        FeedItem {
            portal_id: "p".into(),
            title: format!("t{n}"),
            category: "Video".into(),
            subcategory: String::new(),
            username: "u".into(),
            content_size: 1,
            torrent_url: format!("http://p/{n}.torrent"),
            published_at: 1_000 + n as i64,
            description: String::new(),
        }
    }

    #[test]
    fn dedup_across_polls() {
        let t = FakeTransport::default();
        let p = profile();
        let clock = ManualClock::new(0);
        let mut state = IngestState::default();
        t.set(&p.feed_url, Ok(render_feed(&p, &[item(1), item(2)]).into_bytes()));
        let first = poll(&t, &p, &mut state, &clock, RetryPolicy::default());
        assert_eq!(first.new_items.len(), 2);
        let second = poll(&t, &p, &mut state, &clock, RetryPolicy::default());
        assert!(second.new_items.is_empty());

        t.set(
            &p.feed_url,
            Ok(render_feed(&p, &[item(3), item(1), item(2)]).into_bytes()),
        );
        let third = poll(&t, &p, &mut state, &clock, RetryPolicy::default());
        assert_eq!(third.new_items, vec![item(3)]);
    }

    #[test]
    fn timeout_leaves_state_unchanged() {
        let t = FakeTransport::default();
        let p = profile();
        let clock = ManualClock::new(0);
        let mut state = IngestState::default();
        t.set(&p.feed_url, Ok(render_feed(&p, &[item(1)]).into_bytes()));
        poll(&t, &p, &mut state, &clock, RetryPolicy::default());
        let before = state.clone();

        t.set(&p.feed_url, Err(TransportError::Timeout));
        let out = poll(&t, &p, &mut state, &clock, RetryPolicy::default());
        assert!(out.new_items.is_empty());
        assert_eq!(
            out.error,
            Some(PollError::Transport {
                source: TransportError::Timeout,
                attempts: 3
            })
        );
        assert_eq!(state, before);
        // backoff 5 + 10 seconds of virtual sleep
        assert_eq!(clock.now(), 15);
    }

    #[test]
    fn fetch_404_fails_after_three_attempts() {
        let t = FakeTransport::default();
        let clock = ManualClock::new(0);
        let err = fetch_torrent(&t, &item(9), &clock, RetryPolicy::default()).unwrap_err();
        assert_eq!(
            err,
            FetchFailure::Transport {
                message: "HTTP status 404".into(),
                attempts: 3
            }
        );
        assert_eq!(t.calls("http://p/9.torrent"), 3);
    }

    #[test]
    fn fetch_corrupt_bytes_is_parse_failure() {
        let t = FakeTransport::default();
        t.set("http://p/1.torrent", Ok(b"d8:announce".to_vec()));
        let clock = ManualClock::new(0);
        let err = fetch_torrent(&t, &item(1), &clock, RetryPolicy::default()).unwrap_err();
        assert!(matches!(err, FetchFailure::Parse { .. }));
        assert_eq!(t.calls("http://p/1.torrent"), 1);
    }

    #[test]
    fn state_persists() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.json");
        assert_eq!(IngestState::load(&path).unwrap(), IngestState::default());
        let mut s = IngestState::default();
        s.seen.insert(item(1).key());
        s.last_poll_at = Some(5);
        s.save(&path).unwrap();
        assert_eq!(IngestState::load(&path).unwrap(), s);
    }
}
