//! Deterministic traffic policing: timestamp-only token buckets, the
//! per-source monitor and exact duplicate suppression.

pub mod bucket;
pub mod dedup;
pub mod monitor;

pub use bucket::TokenBucket;
pub use dedup::{DedupVerdict, DedupWindow};
pub use monitor::{
    report_csv, Monitor, MonitorEntry, MonitorKey, ShardedMonitor, SourceStats, Verdict,
};
