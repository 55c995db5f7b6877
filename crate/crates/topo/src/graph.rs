use helia_core::admission::AllocationMatrix;
use helia_core::{Bandwidth, IfId};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ExperimentConfig;

/// Capacity buckets: 40, 80, ..., 400 Gbps.
pub const BUCKETS: u64 = 10;
pub const BUCKET_STEP: Bandwidth = Bandwidth::gbps(40);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub capacity: Bandwidth,
}

/// One AS. Interface 0 is internal; the neighbour at position `k` of the
/// ascending `neighbors` list sits behind interface `k + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub neighbors: Vec<usize>,
    /// Link capacity per interface, index = interface id.
    pub capacities: Vec<Bandwidth>,
}

impl Node {
    pub fn degree(&self) -> usize {
        self.neighbors.len()
    }

    /// Interface facing `neighbor`.
    pub fn interface_to(&self, neighbor: usize) -> Option<IfId> {
        self.neighbors
            .binary_search(&neighbor)
            .ok()
            .map(|k| IfId(k as u16 + 1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologyGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub matrices: Vec<AllocationMatrix>,
}

impl TopologyGraph {
    /// Builds nodes, interfaces and matrices from an undirected edge list
    /// whose capacities are already assigned.
    pub fn from_edges(n: usize, edges: Vec<Edge>) -> Self {
        let mut adj: Vec<Vec<(usize, Bandwidth)>> = vec![Vec::new(); n];
        for e in &edges {
            adj[e.u].push((e.v, e.capacity));
            adj[e.v].push((e.u, e.capacity));
        }
        let nodes = adj
            .into_iter()
            .map(|mut nb| {
                nb.sort();
                let max = nb.iter().map(|x| x.1).max().unwrap_or(Bandwidth::ZERO);
                let mut capacities = vec![max];
                capacities.extend(nb.iter().map(|x| x.1));
                Node {
                    neighbors: nb.into_iter().map(|x| x.0).collect(),
                    capacities,
                }
            })
            .collect();
        let mut g = TopologyGraph {
            nodes,
            edges,
            matrices: Vec::new(),
        };
        g.matrices = build_matrices(&g);
        g
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.nodes.iter().map(Node::degree).collect()
    }

    pub fn is_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for &y in &self.nodes[x].neighbors {
                if !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Barabási–Albert graph: `m` initial isolated nodes, then every new node
/// attaches to `m` distinct existing nodes chosen proportionally to degree.
pub fn barabasi_albert(n: usize, m: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    assert!(m >= 1 && m < n, "need 1 <= m < n");
    let mut edges = Vec::with_capacity(m * (n - m));
    let mut targets: Vec<usize> = (0..m).collect();
    // Every node appears here once per unit of degree.
    let mut repeated: Vec<usize> = Vec::with_capacity(2 * m * n);
    for src in m..n {
        for &t in &targets {
            edges.push((t.min(src), t.max(src)));
        }
        repeated.extend_from_slice(&targets);
        repeated.extend(std::iter::repeat(src).take(m));
        targets.clear();
        while targets.len() < m {
            let t = *repeated.choose(rng).expect("nonempty");
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
    }
    edges
}

/// Degree-gravity capacities: an edge's bucket is the quantile of
/// `deg(u)·deg(v)` among all edges; equal products share the lower bucket.
pub fn gravity_capacities(n: usize, pairs: &[(usize, usize)]) -> Vec<Edge> {
    let mut deg = vec![0u64; n];
    for &(u, v) in pairs {
        deg[u] += 1;
        deg[v] += 1;
    }
    let products: Vec<u64> = pairs.iter().map(|&(u, v)| deg[u] * deg[v]).collect();
    let mut sorted = products.clone();
    sorted.sort_unstable();
    let e = pairs.len() as u64;
    pairs
        .iter()
        .zip(&products)
        .map(|(&(u, v), p)| {
            let rank = sorted.partition_point(|x| x < p) as u64;
            let bucket = rank * BUCKETS / e;
            Edge {
                u,
                v,
                capacity: Bandwidth(BUCKET_STEP.0 * (bucket + 1)),
            }
        })
        .collect()
}

pub fn generate_topology(cfg: &ExperimentConfig) -> TopologyGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pairs = barabasi_albert(cfg.n_nodes, cfg.attachment, &mut rng);
    TopologyGraph::from_edges(cfg.n_nodes, gravity_capacities(cfg.n_nodes, &pairs))
}

pub fn build_matrices(g: &TopologyGraph) -> Vec<AllocationMatrix> {
    g.nodes
        .iter()
        .map(|n| AllocationMatrix::from_capacities(&n.capacities))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, m: usize, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            n_nodes: n,
            attachment: m,
            seed,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn ba_edge_count_and_connectivity() {
        let g = generate_topology(&cfg(500, 2, 1));
        assert_eq!(g.edges.len(), 996);
        assert!(g.is_connected());
        let mut e: Vec<_> = g.edges.iter().map(|e| (e.u, e.v)).collect();
        e.sort();
        e.dedup();
        assert_eq!(e.len(), 996, "no parallel edges");
    }

    #[test]
    fn complete_graph_is_single_bucket() {
        let mut pairs = Vec::new();
        for u in 0..6 {
            for v in u + 1..6 {
                pairs.push((u, v));
            }
        }
        let edges = gravity_capacities(6, &pairs);
        assert!(edges.iter().all(|e| e.capacity == Bandwidth::gbps(40)));
    }

    #[test]
    fn capacity_monotone_in_degree_product() {
        for seed in 0..5 {
            let g = generate_topology(&cfg(300, 2, seed));
            let deg = g.degrees();
            let mut v: Vec<(usize, Bandwidth)> = g
                .edges
                .iter()
                .map(|e| (deg[e.u] * deg[e.v], e.capacity))
                .collect();
            v.sort();
            assert!(v.windows(2).all(|w| w[0].1 <= w[1].1));
            assert_eq!(v[0].1, Bandwidth::gbps(40));
            assert_eq!(v.last().unwrap().1, Bandwidth::gbps(400));
        }
    }

    #[test]
    fn interfaces_follow_sorted_neighbors() {
        let edges = vec![
            Edge { u: 0, v: 2, capacity: Bandwidth::gbps(40) },
            Edge { u: 0, v: 1, capacity: Bandwidth::gbps(80) },
        ];
        let g = TopologyGraph::from_edges(3, edges);
        let n0 = &g.nodes[0];
        assert_eq!(n0.interface_to(1), Some(IfId(1)));
        assert_eq!(n0.interface_to(2), Some(IfId(2)));
        assert_eq!(n0.capacities, vec![Bandwidth::gbps(80), Bandwidth::gbps(80), Bandwidth::gbps(40)]);
        assert_eq!(g.matrices[0].n_interfaces(), 3);
    }

    #[test]
    fn matrix_three_interfaces() {
        let caps = [Bandwidth(100), Bandwidth(100), Bandwidth(40)];
        let m = AllocationMatrix::from_capacities(&caps);
        assert_eq!(m.to_rows(), vec![vec![0, 50, 20], vec![50, 0, 20], vec![20, 20, 0]]);
    }

    #[test]
    fn matrices_respect_capacities() {
        let g = generate_topology(&cfg(200, 3, 9));
        for (node, m) in g.nodes.iter().zip(&g.matrices) {
            for i in 0..node.capacities.len() {
                assert!(m.column_sum(i) <= node.capacities[i].0 as u128);
                assert!(m.row_sum(i) <= node.capacities[i].0 as u128);
            }
        }
    }
}
