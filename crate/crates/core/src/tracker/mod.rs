//! Tracker announce client and per-vantage rate limiting.

mod announce;
mod limiter;

pub use announce::{
    build_announce, encode_announce_response, encode_failure, parse_announce_query, parse_announce_response,
    AnnounceEvent, AnnounceQuery, AnnounceRequest, AnnounceResult, TrackerError, Vantage, DEFAULT_NUMWANT,
};
pub use limiter::{Decision, RateLimiter, DEFAULT_MIN_INTERVAL};
