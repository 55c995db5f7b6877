//! Reservation sizes and γ-cover on random scale-free topologies.
//!
//! A run generates a Barabási–Albert graph with degree-gravity link
//! capacities, derives each AS's allocation matrix, samples destinations
//! per source (degree-weighted, without replacement), routes along
//! shortest paths, and sizes every end-to-end reservation under one of the
//! two composition strategies.

pub mod cover;
pub mod graph;
pub mod output;
pub mod plot;
pub mod reserve;
pub mod sample;

use helia_core::source::Strategy;
use helia_core::Bandwidth;
use thiserror::Error;

pub use cover::{gamma_cover, median, CoverResult};
pub use graph::{build_matrices, generate_topology, Edge, Node, TopologyGraph};
pub use reserve::{
    compute_reservations, compute_reservations_sequential, flyover_loads, FlyoverLoads, PathTree,
    Reservations, Usage,
};
pub use sample::{sample_destinations, sample_size};

#[derive(Debug, Error)]
pub enum TopoError {
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("plot: {0}")]
    Plot(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_nodes: usize,
    /// Edges added per new node.
    pub attachment: usize,
    /// Fraction of ASes each source talks to.
    pub r: f64,
    pub strategy: Strategy,
    pub rho_min: u64,
    pub seed: u64,
    pub gamma: Bandwidth,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_nodes: 500,
            attachment: 1,
            r: 0.1,
            strategy: Strategy::Maximum,
            rho_min: 1,
            seed: 0,
            gamma: Bandwidth::kbps(100),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), TopoError> {
        if self.n_nodes < 2 {
            return Err(TopoError::Invalid("need at least 2 nodes".into()));
        }
        if self.attachment == 0 || self.attachment >= self.n_nodes {
            return Err(TopoError::Invalid(format!(
                "attachment {} must be in [1, {})",
                self.attachment, self.n_nodes
            )));
        }
        if !(self.r > 0.0 && self.r <= 1.0) {
            return Err(TopoError::Invalid(format!("r = {} outside (0, 1]", self.r)));
        }
        if self.rho_min == 0 {
            return Err(TopoError::Invalid("rho_min must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn strategy_name(s: Strategy) -> &'static str {
    match s {
        Strategy::Concurrent => "concurrent",
        Strategy::Maximum => "max",
    }
}

pub fn parse_strategy(s: &str) -> Option<Strategy> {
    match s.to_ascii_lowercase().as_str() {
        "concurrent" | "conc" => Some(Strategy::Concurrent),
        "max" | "maximum" => Some(Strategy::Maximum),
        _ => None,
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub graph: TopologyGraph,
    pub reservations: Reservations,
    pub cover: CoverResult,
}

/// Full pipeline for one configuration.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment, TopoError> {
    cfg.validate()?;
    let graph = generate_topology(cfg);
    let samples = sample::truncate_orders(&sample::all_orders(&graph, cfg.seed), cfg.r);
    let reservations = compute_reservations(&graph, &samples, cfg.strategy, cfg.rho_min);
    let cover = gamma_cover(&reservations, cfg.gamma);
    Ok(Experiment {
        config: cfg.clone(),
        graph,
        reservations,
        cover,
    })
}

/// Median cover for each `(r, strategy)` combination on one graph. The
/// samples for different `r` are nested.
pub fn cover_grid(
    base: &ExperimentConfig,
    rates: &[f64],
    strategies: &[Strategy],
) -> Result<Vec<(f64, Strategy, CoverResult)>, TopoError> {
    base.validate()?;
    let graph = generate_topology(base);
    let orders = sample::all_orders(&graph, base.seed);
    let mut out = Vec::new();
    for &r in rates {
        let cfg = ExperimentConfig { r, ..base.clone() };
        cfg.validate()?;
        let samples = sample::truncate_orders(&orders, r);
        let loads = flyover_loads(&graph, &samples, base.rho_min);
        for &s in strategies {
            let res = reserve::reservation_sizes(&graph, &loads, &samples, s);
            out.push((r, s, gamma_cover(&res, base.gamma)));
        }
    }
    Ok(out)
}
