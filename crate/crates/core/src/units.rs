//! Human-readable bandwidth (`100kbps`, `40Gbps`) and duration (`500ms`,
//! `10s`) parsing, plus serde adapters for config files.

use std::time::Duration;

use thiserror::Error;

use crate::types::Bandwidth;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse {input:?} as {what}")]
pub struct UnitError {
    input: String,
    what: &'static str,
}

fn split_number(s: &str) -> Option<(f64, &str)> {
    let s = s.trim();
    let idx = s
        .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || c == '+' || c == '-'))
        .unwrap_or(s.len());
    let (num, unit) = s.split_at(idx);
    let v: f64 = num.parse().ok()?;
    (v.is_finite() && v >= 0.0).then_some((v, unit.trim()))
}

pub fn parse_bandwidth(s: &str) -> Result<Bandwidth, UnitError> {
    let err = || UnitError {
        input: s.to_string(),
        what: "bandwidth",
    };
    let (v, unit) = split_number(s).ok_or_else(err)?;
    let scale = match unit.to_ascii_lowercase().as_str() {
        "" | "bps" => 1.0,
        "kbps" => 1e3,
        "mbps" => 1e6,
        "gbps" => 1e9,
        "tbps" => 1e12,
        _ => return Err(err()),
    };
    Ok(Bandwidth((v * scale).round() as u64))
}

pub fn parse_duration(s: &str) -> Result<Duration, UnitError> {
    let err = || UnitError {
        input: s.to_string(),
        what: "duration",
    };
    let (v, unit) = split_number(s).ok_or_else(err)?;
    let ns = match unit {
        "ns" => 1.0,
        "us" => 1e3,
        "ms" => 1e6,
        "s" => 1e9,
        "min" => 60e9,
        _ => return Err(err()),
    };
    Ok(Duration::from_nanos((v * ns).round() as u64))
}

pub fn format_duration(d: Duration) -> String {
    let ns = d.as_nanos();
    if ns % 1_000_000_000 == 0 {
        format!("{}s", ns / 1_000_000_000)
    } else if ns % 1_000_000 == 0 {
        format!("{}ms", ns / 1_000_000)
    } else if ns % 1_000 == 0 {
        format!("{}us", ns / 1_000)
    } else {
        format!("{ns}ns")
    }
}

/// `#[serde(with = "units::duration")]`
pub mod duration {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_duration(*d))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_duration(&s).map_err(serde::de::Error::custom)
    }
}

/// `#[serde(with = "units::bandwidth")]`
pub mod bandwidth {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::types::Bandwidth;

    pub fn serialize<S: Serializer>(b: &Bandwidth, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&b.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Bandwidth, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_bandwidth(&s).map_err(serde::de::Error::custom)
    }
}
