use std::io::Write;

use helia_core::source::Strategy;
use serde::Serialize;

use crate::cover::CoverResult;
use crate::graph::TopologyGraph;
use crate::reserve::Reservations;
use crate::{strategy_name, TopoError};

#[derive(Debug, Clone, Copy)]
pub struct RunKey {
    pub seed: u64,
    pub n: usize,
    pub r: f64,
    pub strategy: Strategy,
}

#[derive(Serialize)]
struct ReservationRow<'a> {
    seed: u64,
    n: usize,
    r: f64,
    strategy: &'a str,
    src: usize,
    dst: usize,
    a_ij: u64,
}

#[derive(Serialize)]
struct CoverRow<'a> {
    seed: u64,
    n: usize,
    r: f64,
    strategy: &'a str,
    gamma: u64,
    median_cover: f64,
    /// Left empty: room for comparison data from other allocation schemes.
    external_median: Option<f64>,
}

#[derive(Serialize)]
struct EdgeRow {
    u: usize,
    v: usize,
    capacity_bps: u64,
}

/// One row per (source, destination), sizes in bits per second.
pub fn write_reservations<W: Write>(w: W, key: RunKey, res: &Reservations) -> Result<(), TopoError> {
    let mut out = csv::Writer::from_writer(w);
    for (src, dst, a) in res.iter() {
        out.serialize(ReservationRow {
            seed: key.seed,
            n: key.n,
            r: key.r,
            strategy: strategy_name(key.strategy),
            src,
            dst,
            a_ij: a.0,
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_cover<'a, W: Write>(
    w: W,
    rows: impl IntoIterator<Item = (RunKey, &'a CoverResult)>,
) -> Result<(), TopoError> {
    let mut out = csv::Writer::from_writer(w);
    for (key, c) in rows {
        out.serialize(CoverRow {
            seed: key.seed,
            n: key.n,
            r: key.r,
            strategy: strategy_name(key.strategy),
            gamma: c.gamma.0,
            median_cover: c.median,
            external_median: None,
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_edges<W: Write>(w: W, g: &TopologyGraph) -> Result<(), TopoError> {
    let mut out = csv::Writer::from_writer(w);
    for e in &g.edges {
        out.serialize(EdgeRow {
            u: e.u,
            v: e.v,
            capacity_bps: e.capacity.0,
        })?;
    }
    out.flush()?;
    Ok(())
}
