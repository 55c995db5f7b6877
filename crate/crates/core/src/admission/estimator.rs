//! Per-interface-pair estimate of the number of requesting ASes, with
//! rotating membership filters and tentative first-request slots.

use std::mem;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::filter::{FilterConfig, MembershipFilter};
use crate::types::{AsId, Bandwidth, Timestamp};
use crate::units;

/// Exact fraction used for ω, so grant sums can be checked without rounding.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Fraction {
    num: u64,
    den: u64,
}

const FRACTION_DEN: u64 = 1_000_000;

impl Fraction {
    pub fn new(num: u64, den: u64) -> Option<Self> {
        (den > 0 && num > 0 && num <= den).then_some(Fraction { num, den })
    }

    pub fn numer(self) -> u64 {
        self.num
    }

    pub fn denom(self) -> u64 {
        self.den
    }

    pub fn as_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl PartialEq for Fraction {
    fn eq(&self, o: &Self) -> bool {
        self.num as u128 * o.den as u128 == o.num as u128 * self.den as u128
    }
}

impl Eq for Fraction {}

impl TryFrom<f64> for Fraction {
    type Error = String;

    fn try_from(v: f64) -> Result<Self, String> {
        let num = (v * FRACTION_DEN as f64).round() as u64;
        Fraction::new(num, FRACTION_DEN).ok_or_else(|| format!("omega must lie in (0, 1], got {v}"))
    }
}

impl From<Fraction> for f64 {
    fn from(f: Fraction) -> f64 {
        f.as_f64()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    /// Rotation interval ε; also the validity of every grant.
    #[serde(with = "units::duration")]
    pub epsilon: Duration,
    pub rho_min: u64,
    pub omega: Fraction,
    pub theta: u32,
    pub filter: FilterConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            epsilon: Duration::from_secs(10),
            rho_min: 16,
            omega: Fraction::new(4, 5).unwrap(),
            theta: 8,
            filter: FilterConfig::default(),
        }
    }
}

impl EstimatorConfig {
    /// Exact-set filters, mainly for tests and simulation oracles.
    pub fn exact() -> Self {
        EstimatorConfig {
            filter: FilterConfig::Exact,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grant {
    pub bw: Bandwidth,
    pub ts_exp: Timestamp,
    pub tentative: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Granted(Grant),
    /// The requester should retry in a later interval.
    Denied,
}

impl Admission {
    pub fn grant(self) -> Option<Grant> {
        match self {
            Admission::Granted(g) => Some(g),
            Admission::Denied => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct TentativeSlot {
    holder: AsId,
    expires: Timestamp,
}

/// `floor(m · num / (den · div))`
fn share(m: Bandwidth, num: u64, den: u64, div: u64) -> Bandwidth {
    Bandwidth((m.0 as u128 * num as u128 / (den as u128 * div as u128)) as u64)
}

/// The flyover size for a pair with `rho` requesters.
pub fn flyover_bandwidth(m_entry: Bandwidth, rho: u64, rho_min: u64) -> Bandwidth {
    share(m_entry, 1, 1, rho.max(rho_min).max(1))
}

#[derive(Debug, Clone)]
pub struct RhoEstimator {
    cfg: EstimatorConfig,
    /// Sources that may be granted in the current interval (read-only between rotations).
    b_p: MembershipFilter,
    /// Requesters of the current interval.
    b_c: MembershipFilter,
    /// Requesters of the previous interval.
    b_cc: MembershipFilter,
    rho: u64,
    next_rotation: Timestamp,
    slots: Vec<TentativeSlot>,
}

impl RhoEstimator {
    /// The first rotation happens one interval after `start`.
    pub fn new(cfg: EstimatorConfig, start: Timestamp) -> Self {
        assert!(cfg.rho_min >= 1, "rho_min must be at least 1");
        assert!(!cfg.epsilon.is_zero(), "epsilon must be positive");
        RhoEstimator {
            b_p: MembershipFilter::new(cfg.filter),
            b_c: MembershipFilter::new(cfg.filter),
            b_cc: MembershipFilter::new(cfg.filter),
            rho: cfg.rho_min,
            next_rotation: start + cfg.epsilon,
            slots: Vec::with_capacity(cfg.theta as usize),
            cfg,
        }
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.cfg
    }

    pub fn rho(&self) -> u64 {
        self.rho
    }

    pub fn next_rotation(&self) -> Timestamp {
        self.next_rotation
    }

    /// Tentative slots held by unexpired grants at `now`.
    pub fn slots_used(&self, now: Timestamp) -> usize {
        self.slots.iter().filter(|s| s.expires >= now).count()
    }

    pub fn is_registered(&self, src: AsId) -> bool {
        self.b_p.contains(src)
    }

    pub fn in_current(&self, src: AsId) -> bool {
        self.b_c.contains(src)
    }

    pub fn in_previous(&self, src: AsId) -> bool {
        self.b_cc.contains(src)
    }

    /// Applies every rotation due at or before `now`.
    pub fn advance(&mut self, now: Timestamp) {
        let mut rotations = 0u32;
        while now >= self.next_rotation {
            if rotations == 3 {
                // All three filters are empty now; skip the remaining idle intervals.
                let eps = self.cfg.epsilon.as_nanos() as u64;
                let behind = (now.0 - self.next_rotation.0) / eps + 1;
                self.next_rotation = Timestamp(self.next_rotation.0 + behind * eps);
                self.rho = self.cfg.rho_min;
                break;
            }
            self.rotate();
            rotations += 1;
        }
    }

    fn rotate(&mut self) {
        self.rho = self
            .b_c
            .union_cardinality(&self.b_cc)
            .max(self.cfg.rho_min);
        // (P, CC, C) <- (CC, C, reset(P))
        let mut old_p = mem::replace(&mut self.b_p, MembershipFilter::new(self.cfg.filter));
        old_p.reset();
        self.b_p = mem::replace(&mut self.b_cc, mem::replace(&mut self.b_c, old_p));
        self.next_rotation = self.next_rotation + self.cfg.epsilon;
    }

    pub fn request(&mut self, src: AsId, m_entry: Bandwidth, now: Timestamp) -> Admission {
        self.advance(now);
        self.b_c.insert(src);
        let ts_exp = now + self.cfg.epsilon;
        let omega = self.cfg.omega;
        if self.b_p.contains(src) {
            return Admission::Granted(Grant {
                bw: share(m_entry, omega.numer(), omega.denom(), self.rho),
                ts_exp,
                tentative: false,
            });
        }
        if self.cfg.theta == 0 {
            return Admission::Denied;
        }
        let theta = self.cfg.theta as usize;
        // A slot stays occupied until its grant expires; a holder refreshes its own slot.
        let idx = self
            .slots
            .iter()
            .position(|s| s.holder == src && s.expires >= now)
            .or_else(|| self.slots.iter().position(|s| s.expires < now))
            .or_else(|| {
                (self.slots.len() < theta).then(|| {
                    self.slots.push(TentativeSlot {
                        holder: src,
                        expires: ts_exp,
                    });
                    self.slots.len() - 1
                })
            });
        match idx {
            Some(i) => {
                self.slots[i] = TentativeSlot {
                    holder: src,
                    expires: ts_exp,
                };
                Admission::Granted(Grant {
                    bw: share(m_entry, omega.denom() - omega.numer(), omega.denom(), theta as u64),
                    ts_exp,
                    tentative: true,
                })
            }
            None => Admission::Denied,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: Duration = Duration::from_secs(10);

    fn cfg(theta: u32, rho_min: u64) -> EstimatorConfig {
        EstimatorConfig {
            epsilon: EPS,
            rho_min,
            omega: Fraction::new(4, 5).unwrap(),
            theta,
            filter: FilterConfig::Exact,
        }
    }

    #[test]
    fn flyover_bandwidth_examples() {
        assert_eq!(flyover_bandwidth(Bandwidth::gbps(100), 4, 1), Bandwidth::gbps(25));
        assert_eq!(flyover_bandwidth(Bandwidth::gbps(100), 2, 5), Bandwidth::gbps(20));
        assert_eq!(flyover_bandwidth(Bandwidth::ZERO, 7, 1), Bandwidth::ZERO);
    }

    #[test]
    fn first_request_gets_tentative_slot() {
        let m = Bandwidth::gbps(80);
        let mut e = RhoEstimator::new(cfg(8, 16), Timestamp::ZERO);
        let g = e.request(AsId(1), m, Timestamp(5)).grant().unwrap();
        assert!(g.tentative);
        // (1 - 0.8) * 80 / 8
        assert_eq!(g.bw, Bandwidth::gbps(2));
        assert_eq!(g.ts_exp, Timestamp(5) + EPS);
    }

    #[test]
    fn granted_two_intervals_after_first_request() {
        let m = Bandwidth::gbps(80);
        let mut e = RhoEstimator::new(cfg(0, 1), Timestamp::ZERO);
        let t = Timestamp::from_secs(3);
        assert_eq!(e.request(AsId(1), m, t), Admission::Denied);
        let g = e.request(AsId(1), m, t + 2 * EPS).grant().unwrap();
        assert!(!g.tentative);
        // rho = |{1}| = 1
        assert_eq!(g.bw, Bandwidth::gbps(64));
    }

    #[test]
    fn rotation_moves_requesters_through_filters() {
        let mut e = RhoEstimator::new(cfg(0, 1), Timestamp::ZERO);
        e.request(AsId(1), Bandwidth(1), Timestamp(1));
        assert!(e.in_current(AsId(1)));
        e.advance(Timestamp::ZERO + EPS);
        assert!(e.in_previous(AsId(1)) && !e.is_registered(AsId(1)));
        e.advance(Timestamp::ZERO + 2 * EPS);
        assert!(e.is_registered(AsId(1)));
        e.advance(Timestamp::ZERO + 3 * EPS);
        assert!(!e.is_registered(AsId(1)));
    }

    #[test]
    fn rho_is_union_of_last_two_intervals() {
        let mut e = RhoEstimator::new(cfg(0, 1), Timestamp::ZERO);
        e.request(AsId(2), Bandwidth(1), Timestamp(1));
        e.request(AsId(3), Bandwidth(1), Timestamp(2));
        e.advance(Timestamp::ZERO + EPS);
        e.request(AsId(1), Bandwidth(1), Timestamp::ZERO + EPS);
        e.request(AsId(2), Bandwidth(1), Timestamp::ZERO + EPS);
        e.advance(Timestamp::ZERO + 2 * EPS);
        assert_eq!(e.rho(), 3);
    }

    #[test]
    fn idle_estimator_falls_back_to_rho_min() {
        let mut e = RhoEstimator::new(cfg(0, 16), Timestamp::ZERO);
        for i in 0..40 {
            e.request(AsId(i), Bandwidth(1), Timestamp(1));
        }
        e.advance(Timestamp::ZERO + EPS);
        assert_eq!(e.rho(), 40);
        e.advance(Timestamp::from_secs(10_000));
        assert_eq!(e.rho(), 16);
        assert_eq!(e.next_rotation(), Timestamp::from_secs(10_010));
    }

    #[test]
    fn rotation_precedes_request_at_the_boundary() {
        let mut e = RhoEstimator::new(cfg(0, 1), Timestamp::ZERO);
        e.request(AsId(1), Bandwidth(100), Timestamp(0));
        // exactly at the second boundary the source is already registered
        assert!(e.request(AsId(1), Bandwidth(100), Timestamp::ZERO + 2 * EPS).grant().is_some());
    }

    #[test]
    fn tentative_slots_are_held_until_expiry() {
        let m = Bandwidth(1_000);
        let mut e = RhoEstimator::new(cfg(2, 1), Timestamp::ZERO);
        let t = Timestamp::from_secs(9);
        assert!(e.request(AsId(1), m, t).grant().is_some());
        assert!(e.request(AsId(2), m, t).grant().is_some());
        assert_eq!(e.request(AsId(3), m, t), Admission::Denied);
        // a repeat from a holder reuses its slot
        assert!(e.request(AsId(1), m, t).grant().is_some());
        assert_eq!(e.slots_used(t), 2);
        // the rotation at 10 s does not free the slots
        assert_eq!(e.request(AsId(3), m, Timestamp::from_secs(11)), Admission::Denied);
        assert!(e.request(AsId(3), m, Timestamp::from_secs(19) + Duration::from_nanos(1)).grant().is_some());
    }

    #[test]
    fn omega_fraction_from_float() {
        let f = Fraction::try_from(0.8).unwrap();
        assert_eq!((f.numer(), f.denom()), (800_000, 1_000_000));
        assert!(Fraction::try_from(1.2).is_err());
        assert!(Fraction::try_from(0.0).is_err());
    }
}
