use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::estimator::{Admission, EstimatorConfig, RhoEstimator};
use crate::crypto::Demand;
use crate::types::{AsId, Bandwidth, Direction, IfId, Timestamp};

/// Input to a bandwidth policy for one flyover request. `ingress`/`egress`
/// are the interfaces the reserved traffic will use, already swapped for
/// backward reservations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyRequest {
    pub src: AsId,
    pub ingress: IfId,
    pub egress: IfId,
    pub direction: Direction,
    pub m_entry: Bandwidth,
    pub demand: Option<Demand>,
    pub now: Timestamp,
}

/// Computes the bandwidth and expiry of a flyover.
///
/// Implementations must never over-allocate: the concurrently valid grants
/// of one interface pair may not sum to more than its matrix entry.
pub trait BandwidthPolicy: Send {
    fn get_bandwidth(&mut self, req: &PolicyRequest) -> Admission;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorScope {
    /// One estimator per (ingress, egress) pair.
    #[default]
    PerPair,
    /// One estimator per ingress interface, shared by all its egresses.
    PerIngress,
}

/// Default policy: one [`RhoEstimator`] per pair or per ingress interface.
#[derive(Debug, Clone)]
pub struct EstimatorPolicy {
    cfg: EstimatorConfig,
    scope: EstimatorScope,
    start: Timestamp,
    estimators: HashMap<(IfId, Option<IfId>), RhoEstimator>,
}

impl EstimatorPolicy {
    /// All estimators rotate on a common grid starting at `start`.
    pub fn new(cfg: EstimatorConfig, scope: EstimatorScope, start: Timestamp) -> Self {
        EstimatorPolicy {
            cfg,
            scope,
            start,
            estimators: HashMap::new(),
        }
    }

    fn key(&self, ingress: IfId, egress: IfId) -> (IfId, Option<IfId>) {
        match self.scope {
            EstimatorScope::PerPair => (ingress, Some(egress)),
            EstimatorScope::PerIngress => (ingress, None),
        }
    }

    pub fn estimator(&self, ingress: IfId, egress: IfId) -> Option<&RhoEstimator> {
        self.estimators.get(&self.key(ingress, egress))
    }
}

impl BandwidthPolicy for EstimatorPolicy {
    fn get_bandwidth(&mut self, req: &PolicyRequest) -> Admission {
        let key = self.key(req.ingress, req.egress);
        let (cfg, start) = (self.cfg, self.start);
        self.estimators
            .entry(key)
            .or_insert_with(|| RhoEstimator::new(cfg, start))
            .request(req.src, req.m_entry, req.now)
    }
}
