//! Portal feed ingestion: feed parsing, new-item detection and `.torrent` retrieval.

mod feed;
mod poller;

pub use feed::{
    parse_feed, parse_size, render_feed, FeedError, FeedItem, ItemKey, ParsedFeed, PortalProfile, ProfileError,
    ProfileRegistry, SkippedItem,
};
pub use poller::{fetch_torrent, poll, FetchFailure, IngestState, PollError, PollOutcome, RetryPolicy};
