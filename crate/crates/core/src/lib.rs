//! Flyover bandwidth reservations: per-hop reservations requested by a
//! source AS, admitted by on-path border routers, and policed with a
//! timestamp-only token bucket.

pub mod admission;
pub mod crypto;
pub mod policing;
pub mod router;
pub mod source;
pub mod types;
pub mod units;
pub mod vectors;
pub mod wire;

pub use types::{AsId, Bandwidth, Direction, IfId, Timestamp};
