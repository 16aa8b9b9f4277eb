//! Wall-clock and virtual time. All timestamps are whole seconds since the
//! Unix epoch; all durations are whole seconds.

use std::sync::atomic::{AtomicI64, Ordering};

pub type UnixTime = i64;
pub type Seconds = i64;

pub const MINUTE: Seconds = 60;
pub const HOUR: Seconds = 3600;
pub const DAY: Seconds = 86_400;

pub trait Clock: Send + Sync {
    fn now(&self) -> UnixTime;
    fn sleep(&self, secs: Seconds);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> UnixTime {
        chrono::Utc::now().timestamp()
    }

    fn sleep(&self, secs: Seconds) {
        if secs > 0 {
            std::thread::sleep(std::time::Duration::from_secs(secs as u64));
        }
    }
}

/// A clock that only moves when slept on or set.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicI64);

impl ManualClock {
    pub fn new(start: UnixTime) -> Self {
        Self(AtomicI64::new(start))
    }

    pub fn set(&self, t: UnixTime) {
        self.0.store(t, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> UnixTime {
        self.0.load(Ordering::SeqCst)
    }

    fn sleep(&self, secs: Seconds) {
        if secs > 0 {
            self.0.fetch_add(secs, Ordering::SeqCst);
        }
    }
}

/// Parses durations such as `90`, `18m`, `4h`, `2d`, `30s`.
pub fn parse_duration(s: &str) -> Option<Seconds> {
    let s = s.trim();
    let (num, unit) = match s.find(|c: char| !c.is_ascii_digit()) {
        Some(i) => s.split_at(i),
        None => (s, "s"),
    };
    let n: i64 = num.parse().ok()?;
    let mult = match unit {
        "s" => 1,
        "m" | "min" => MINUTE,
        "h" => HOUR,
        "d" => DAY,
        _ => return None,
    };
    n.checked_mul(mult)
}
