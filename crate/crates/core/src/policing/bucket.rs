use std::time::Duration;

use crate::types::{Bandwidth, Timestamp};

/// Token bucket whose entire state is one timestamp: the instant at which
/// all traffic admitted so far would have drained at the committed rate.
/// With window `T` and rate CIR the burst size is `CBS = CIR · T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(transparent)]
pub struct TokenBucket {
    ts: Timestamp,
}

impl TokenBucket {
    /// A full bucket at `now`.
    pub fn new(now: Timestamp) -> Self {
        TokenBucket { ts: now }
    }

    pub fn timestamp(&self) -> Timestamp {
        self.ts
    }

    /// Admits `pkt_len` bytes iff `max(ts, now) + len/CIR <= now + T`.
    /// The state only changes when the packet is admitted.
    pub fn check(&mut self, rate: Bandwidth, window: Duration, pkt_len: u64, now: Timestamp) -> bool {
        let Some(pkt_time) = rate.transmit_ns(pkt_len) else {
            return false;
        };
        let start = self.ts.0.max(now.0) as u128;
        let finish = start + pkt_time as u128;
        if finish <= now.0 as u128 + window.as_nanos() {
            self.ts = Timestamp(finish as u64);
            true
        } else {
            false
        }
    }

    pub fn to_bytes(self) -> [u8; 8] {
        self.ts.0.to_be_bytes()
    }
}
