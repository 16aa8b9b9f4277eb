//! Append-only event log, dataset export and the publisher query surface.

mod event;
mod export;
mod log;
mod query;

pub use self::log::{read_log, read_records, EventLog, EventSink, MemorySink, StoreError, SyncPolicy};
pub use event::{
    EventBody, EventKind, EventRecord, FeedItemEvent, InvalidEvent, PortalRemoval, ProbeEvent, SCHEMA_VERSION,
};
pub use export::{csv_columns, export, import, ExportFormat, JSONL_FILE};
pub use query::{query_publisher, ProfileIp, ProfileRemoval, PublisherProfile};
