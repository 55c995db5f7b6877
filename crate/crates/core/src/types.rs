//! Identifier, time and bandwidth newtypes shared by every module.

use std::fmt;
use std::ops::{Add, Sub};
use std::time::Duration;

use serde::{Deserialize, Serialize};

/// 64-bit autonomous-system identifier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AsId(pub u64);

impl fmt::Display for AsId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AS{}", self.0)
    }
}

/// 16-bit border interface identifier. Interface 0 is the AS-internal interface.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IfId(pub u16);

impl IfId {
    pub const INTERNAL: IfId = IfId(0);
}

impl fmt::Display for IfId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "if{}", self.0)
    }
}

/// Bandwidth in bits per second.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Bandwidth(pub u64);

impl Bandwidth {
    pub const ZERO: Bandwidth = Bandwidth(0);

    pub const fn bps(v: u64) -> Self {
        Bandwidth(v)
    }

    pub const fn kbps(v: u64) -> Self {
        Bandwidth(v * 1_000)
    }

    pub const fn mbps(v: u64) -> Self {
        Bandwidth(v * 1_000_000)
    }

    pub const fn gbps(v: u64) -> Self {
        Bandwidth(v * 1_000_000_000)
    }

    pub fn as_bps(self) -> u64 {
        self.0
    }

    /// Time needed to serialize `bytes` at this rate, rounded up to whole nanoseconds.
    /// Returns `None` for a zero rate.
    pub fn transmit_ns(self, bytes: u64) -> Option<u64> {
        if self.0 == 0 {
            return None;
        }
        let bits = bytes as u128 * 8 * 1_000_000_000;
        Some(bits.div_ceil(self.0 as u128).min(u64::MAX as u128) as u64)
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.0;
        if v >= 1_000_000_000 && v % 1_000_000_000 == 0 {
            write!(f, "{}Gbps", v / 1_000_000_000)
        } else if v >= 1_000_000 && v % 1_000_000 == 0 {
            write!(f, "{}Mbps", v / 1_000_000)
        } else if v >= 1_000 && v % 1_000 == 0 {
            write!(f, "{}kbps", v / 1_000)
        } else {
            write!(f, "{v}bps")
        }
    }
}

/// Nanoseconds since the Unix epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn from_secs(s: u64) -> Self {
        Timestamp(s * 1_000_000_000)
    }

    pub fn as_nanos(self) -> u64 {
        self.0
    }

    /// Signed difference `self - earlier` in nanoseconds.
    pub fn signed_diff(self, earlier: Timestamp) -> i128 {
        self.0 as i128 - earlier.0 as i128
    }

    pub fn saturating_sub(self, d: Duration) -> Timestamp {
        Timestamp(self.0.saturating_sub(d.as_nanos() as u64))
    }

    /// True when the age `now - self` lies in `[-skew, lifetime + skew]`.
    pub fn is_current(self, now: Timestamp, skew: Duration, lifetime: Duration) -> bool {
        let age = now.signed_diff(self);
        let skew = skew.as_nanos() as i128;
        age >= -skew && age <= lifetime.as_nanos() as i128 + skew
    }
}

impl Add<Duration> for Timestamp {
    type Output = Timestamp;

    fn add(self, rhs: Duration) -> Timestamp {
        Timestamp(self.0.saturating_add(rhs.as_nanos() as u64))
    }
}

impl Sub<Duration> for Timestamp {
    type Output = Timestamp;

    fn sub(self, rhs: Duration) -> Timestamp {
        Timestamp(self.0 - rhs.as_nanos() as u64)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:09}", self.0 / 1_000_000_000, self.0 % 1_000_000_000)
    }
}

/// Reservation direction relative to the source AS.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn to_byte(self) -> u8 {
        match self {
            Direction::Forward => 0,
            Direction::Backward => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Direction::Forward),
            1 => Some(Direction::Backward),
            _ => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        })
    }
}
