use helia_core::Bandwidth;

use crate::reserve::Reservations;

#[derive(Debug, Clone, PartialEq)]
pub struct CoverResult {
    pub gamma: Bandwidth,
    /// Per source: share of its sampled destinations with a reservation
    /// strictly above `gamma`.
    pub covers: Vec<f64>,
    pub median: f64,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Sources without destinations are skipped.
pub fn gamma_cover(res: &Reservations, gamma: Bandwidth) -> CoverResult {
    let covers: Vec<f64> = res
        .sizes
        .iter()
        .filter(|a| !a.is_empty())
        .map(|a| a.iter().filter(|&&x| x > gamma).count() as f64 / a.len() as f64)
        .collect();
    CoverResult {
        gamma,
        median: median(&covers),
        covers,
    }
}
