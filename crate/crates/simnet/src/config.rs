use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use helia_core::router::RouterConfig;
use helia_core::units;
use helia_core::Bandwidth;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("inconsistent scenario: {0}")]
    Invalid(String),
}

/// A linear path of transit ASes between the sources and one destination.
///
/// Link 0 is each sender's private access link into the first AS; link `i`
/// (1 ≤ i ≤ hops) connects node `i-1` to node `i`, node `hops` being the
/// destination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathConfig {
    pub hops: usize,
    #[serde(with = "units::bandwidth")]
    pub capacity: Bandwidth,
    #[serde(with = "units::duration")]
    pub delay: Duration,
    /// Best-effort buffer per link, in packets.
    pub buffer: usize,
    /// Guard on the priority queue; admission should keep it far below.
    pub priority_guard: usize,
    /// Largest packet any sender emits; enters the delay bound.
    pub mtu: usize,
    /// Every AS clock is offset by a uniform draw from `[-skew, skew]`.
    #[serde(with = "units::duration")]
    pub skew: Duration,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            hops: 3,
            capacity: Bandwidth::mbps(100),
            delay: Duration::from_millis(2),
            buffer: 100,
            priority_guard: 10_000,
            mtu: 1500,
            skew: Duration::ZERO,
        }
    }
}

/// A reservation-holding sender. Flows with `rate_factor > 1` overuse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub name: String,
    /// Sending rate as a multiple of the composed reservation rate.
    pub rate_factor: f64,
    pub payload: usize,
    #[serde(with = "units::duration")]
    pub start: Duration,
    /// Interval between setup requests and renewals.
    #[serde(with = "units::duration")]
    pub renew_every: Duration,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            name: "flow".into(),
            rate_factor: 0.9,
            payload: 1000,
            start: Duration::ZERO,
            renew_every: Duration::from_millis(500),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AdversaryConfig {
    /// Unreserved traffic at `factor` times the inter-AS link capacity, injected at the first AS.
    BestEffortFlood {
        factor: f64,
        #[serde(default = "default_flood_packet")]
        packet: usize,
        #[serde(default, with = "units::duration")]
        start: Duration,
    },
    /// `sources` attacker ASes with valid keys, each requesting every `interval`.
    RequestFlood {
        sources: u32,
        #[serde(with = "units::duration")]
        interval: Duration,
        #[serde(default, with = "units::duration")]
        start: Duration,
    },
    /// Duplicates every data packet seen on `link`.
    Replayer {
        link: usize,
        #[serde(default = "default_replay_lag", with = "units::duration")]
        lag: Duration,
    },
    /// Forges packets in `victim`'s name with random validation fields.
    Spoofer {
        victim: String,
        attempts: u64,
        /// Attempts per second.
        rate: u64,
        #[serde(default, with = "units::duration")]
        start: Duration,
    },
    /// A reservation holder sending at `factor` times its rate.
    Overuser {
        factor: f64,
        #[serde(default, with = "units::duration")]
        start: Duration,
    },
    /// Records every byte crossing `link` and every returning setup response.
    LinkObserver { link: usize },
}

fn default_flood_packet() -> usize {
    1400
}

fn default_replay_lag() -> Duration {
    Duration::from_micros(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Requirement {
    R1,
    R2,
    R3,
    R4,
    R5,
}

impl FromStr for Requirement {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "R1" => Ok(Requirement::R1),
            "R2" => Ok(Requirement::R2),
            "R3" => Ok(Requirement::R3),
            "R4" => Ok(Requirement::R4),
            "R5" => Ok(Requirement::R5),
            _ => Err(format!("unknown requirement {s}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(with = "units::duration")]
    pub duration: Duration,
    /// Flows stop sending this long before the end so packets can drain.
    #[serde(default = "default_drain", with = "units::duration")]
    pub drain: Duration,
    #[serde(default)]
    pub path: PathConfig,
    #[serde(default)]
    pub router: RouterConfig,
    #[serde(default)]
    pub flows: Vec<FlowConfig>,
    #[serde(default)]
    pub adversaries: Vec<AdversaryConfig>,
    #[serde(default)]
    pub assert: Vec<Requirement>,
}

fn default_drain() -> Duration {
    Duration::from_secs(1)
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.path.hops == 0 || self.path.hops > 64 {
            return bad(format!("hops must be in 1..=64, got {}", self.path.hops));
        }
        if self.path.capacity.0 == 0 {
            return bad("link capacity must be positive".into());
        }
        if self.drain >= self.duration {
            return bad("drain must be shorter than the duration".into());
        }
        let mut names = std::collections::BTreeSet::new();
        for f in &self.flows {
            if !names.insert(f.name.as_str()) {
                return bad(format!("duplicate flow name {}", f.name));
            }
            if !(f.rate_factor > 0.0) || f.renew_every.is_zero() {
                return bad(format!("flow {}: rate_factor and renew_every must be positive", f.name));
            }
            if f.payload + 64 > self.path.mtu {
                return bad(format!("flow {}: payload exceeds the MTU", f.name));
            }
        }
        for a in &self.adversaries {
            match a {
                AdversaryConfig::Replayer { link, .. } | AdversaryConfig::LinkObserver { link }
                    if *link > self.path.hops =>
                {
                    return bad(format!("link {link} is not on the path"));
                }
                AdversaryConfig::Spoofer { victim, rate, .. } => {
                    if !names.contains(victim.as_str()) {
                        return bad(format!("spoofer victim {victim} is not a flow"));
                    }
                    if *rate == 0 {
                        return bad("spoofer rate must be positive".into());
                    }
                }
                AdversaryConfig::BestEffortFlood { factor, packet, .. }
                    if !(*factor > 0.0) || *packet > self.path.mtu || *packet < 64 =>
                {
                    return bad("flood needs a positive factor and 64 ≤ packet ≤ mtu".into());
                }
                AdversaryConfig::RequestFlood { interval, .. } if interval.is_zero() => {
                    return bad("request flood interval must be positive".into());
                }
                _ => {}
            }
        }
        Ok(())
    }
}
