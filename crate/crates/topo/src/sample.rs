use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::TopologyGraph;

/// `round(r·N)`, kept in `[1, N-1]` so every source has a destination and
/// the source itself is never needed.
pub fn sample_size(n: usize, r: f64) -> usize {
    assert!(r > 0.0 && r <= 1.0, "r must be in (0, 1]");
    ((r * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1))
}

/// All other nodes ordered as a degree-weighted draw without replacement.
///
/// Each candidate gets the key `ln(u) / deg` (Efraimidis–Spirakis); sorting
/// by descending key is distributed exactly like drawing one node at a time
/// with renormalised weights. Any prefix is a valid sample, so samples for
/// increasing `r` are nested.
pub fn destination_order(g: &TopologyGraph, src: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = (0..g.len())
        .filter(|&j| j != src)
        .map(|j| {
            let u: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
            (u.ln() / g.nodes[j].degree() as f64, j)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, j)| j).collect()
}

pub fn sample_destinations(g: &TopologyGraph, src: usize, r: f64, rng: &mut impl Rng) -> Vec<usize> {
    let mut order = destination_order(g, src, rng);
    order.truncate(sample_size(g.len(), r));
    order
}

/// Per-source generator: one ChaCha stream per source, so results do not
/// depend on the order sources are processed in.
pub fn source_rng(seed: u64, src: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(src as u64);
    rng
}

/// Destination orders for every source.
pub fn all_orders(g: &TopologyGraph, seed: u64) -> Vec<Vec<usize>> {
    (0..g.len())
        .map(|s| destination_order(g, s, &mut source_rng(seed, s)))
        .collect()
}

/// Takes the first `round(r·N)` entries of every order.
pub fn truncate_orders(orders: &[Vec<usize>], r: f64) -> Vec<Vec<usize>> {
    let d = sample_size(orders.len(), r);
    orders.iter().map(|o| o[..d.min(o.len())].to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{generate_topology, ExperimentConfig};

    fn graph() -> TopologyGraph {
        generate_topology(&ExperimentConfig {
            n_nodes: 60,
            seed: 3,
            ..ExperimentConfig::default()
        })
    }

    #[test]
    fn sizes() {
        assert_eq!(sample_size(500, 0.1), 50);
        assert_eq!(sample_size(500, 1.0), 499);
        assert_eq!(sample_size(500, 0.0001), 1);
        assert_eq!(sample_size(10, 0.25), 3);
    }

    #[test]
    fn full_rate_is_everyone_else() {
        let g = graph();
        let mut s = sample_destinations(&g, 7, 1.0, &mut source_rng(1, 7));
        s.sort();
        let expect: Vec<usize> = (0..60).filter(|&j| j != 7).collect();
        assert_eq!(s, expect);
    }

    #[test]
    fn samples_are_distinct_and_exclude_source() {
        let g = graph();
        for src in 0..g.len() {
            let s = sample_destinations(&g, src, 0.3, &mut source_rng(2, src));
            assert_eq!(s.len(), 18);
            assert!(!s.contains(&src));
            let mut d = s.clone();
            d.sort();
            d.dedup();
            assert_eq!(d.len(), s.len());
        }
    }

    #[test]
    fn samples_nest_across_rates() {
        let g = graph();
        let orders = all_orders(&g, 4);
        let small = truncate_orders(&orders, 0.1);
        let large = truncate_orders(&orders, 0.5);
        for (a, b) in small.iter().zip(&large) {
            assert_eq!(a[..], b[..a.len()]);
        }
    }
}
