use std::collections::VecDeque;

use helia_core::admission::flyover_bandwidth;
use helia_core::source::Strategy;
use helia_core::{Bandwidth, IfId};
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::graph::TopologyGraph;

const NONE: usize = usize::MAX;

/// Shortest-path tree rooted at a source. Among equally short paths the
/// parent is always the lowest-id neighbour one step closer to the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathTree {
    pub root: usize,
    pub parent: Vec<usize>,
    pub dist: Vec<usize>,
    /// Reachable nodes in nondecreasing distance.
    pub order: Vec<usize>,
}

impl PathTree {
    pub fn new(g: &TopologyGraph, root: usize) -> Self {
        let n = g.len();
        let mut dist = vec![NONE; n];
        let mut order = Vec::with_capacity(n);
        let mut q = VecDeque::from([root]);
        dist[root] = 0;
        while let Some(x) = q.pop_front() {
            order.push(x);
            for &y in &g.nodes[x].neighbors {
                if dist[y] == NONE {
                    dist[y] = dist[x] + 1;
                    q.push_back(y);
                }
            }
        }
        let mut parent = vec![NONE; n];
        for &v in &order[1..] {
            parent[v] = *g.nodes[v]
                .neighbors
                .iter()
                .find(|&&w| dist[w] + 1 == dist[v])
                .expect("bfs parent");
        }
        PathTree { root, parent, dist, order }
    }

    /// Nodes from the root to `dst`, both included.
    pub fn path(&self, dst: usize) -> Option<Vec<usize>> {
        if self.dist[dst] == NONE {
            return None;
        }
        let mut p = vec![dst];
        let mut x = dst;
        while x != self.root {
            x = self.parent[x];
            p.push(x);
        }
        p.reverse();
        Some(p)
    }
}

/// Dense numbering of every (node, ingress, egress) triple.
#[derive(Debug, Clone)]
pub struct PairIndex {
    offset: Vec<usize>,
    width: Vec<usize>,
}

impl PairIndex {
    pub fn new(g: &TopologyGraph) -> Self {
        let mut offset = Vec::with_capacity(g.len());
        let mut width = Vec::with_capacity(g.len());
        let mut total = 0;
        for n in &g.nodes {
            let w = n.capacities.len();
            offset.push(total);
            width.push(w);
            total += w * w;
        }
        offset.push(total);
        PairIndex { offset, width }
    }

    pub fn len(&self) -> usize {
        *self.offset.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn id(&self, node: usize, a: IfId, b: IfId) -> usize {
        self.offset[node] + a.0 as usize * self.width[node] + b.0 as usize
    }

    pub fn decode(&self, id: usize) -> (usize, IfId, IfId) {
        let node = self.offset.partition_point(|&o| o <= id) - 1;
        let local = id - self.offset[node];
        let w = self.width[node];
        (node, IfId((local / w) as u16), IfId((local % w) as u16))
    }
}

/// One flyover a source needs: at `node`, from `ingress` to `egress`,
/// carrying `paths` of the source's selected paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Usage {
    pub node: usize,
    pub ingress: IfId,
    pub egress: IfId,
    pub paths: u32,
}

fn iface(g: &TopologyGraph, x: usize, toward: usize) -> IfId {
    g.nodes[x].interface_to(toward).expect("adjacent")
}

/// Number of selected destinations below every node of the tree.
fn subtree_counts(tree: &PathTree, dests: &[usize]) -> Vec<u32> {
    let mut cnt = vec![0u32; tree.parent.len()];
    for &d in dests {
        cnt[d] += 1;
    }
    for &v in tree.order.iter().skip(1).rev() {
        let c = cnt[v];
        cnt[tree.parent[v]] += c;
    }
    cnt
}

/// Ingress of `x` on paths from the root: internal at the root itself.
fn ingress_of(g: &TopologyGraph, tree: &PathTree, x: usize) -> IfId {
    if x == tree.root {
        IfId(0)
    } else {
        iface(g, x, tree.parent[x])
    }
}

/// Every flyover on the paths from `tree.root` to `dests`: the source's
/// own internal-to-egress pair, each transit pair, and each destination's
/// ingress-to-internal pair.
pub fn source_usage(g: &TopologyGraph, tree: &PathTree, dests: &[usize]) -> Vec<Usage> {
    let cnt = subtree_counts(tree, dests);
    let mut is_dest = vec![false; cnt.len()];
    for &d in dests {
        is_dest[d] = true;
    }
    let mut out = Vec::new();
    for &v in &tree.order {
        if cnt[v] == 0 {
            continue;
        }
        if v != tree.root {
            let p = tree.parent[v];
            out.push(Usage {
                node: p,
                ingress: ingress_of(g, tree, p),
                egress: iface(g, p, v),
                paths: cnt[v],
            });
            if is_dest[v] {
                out.push(Usage {
                    node: v,
                    ingress: iface(g, v, p),
                    egress: IfId(0),
                    paths: 1,
                });
            }
        }
    }
    out
}

/// Requester counts per flyover and the resulting flyover sizes.
#[derive(Debug, Clone)]
pub struct FlyoverLoads {
    pub index: PairIndex,
    /// Number of distinct sources using each flyover.
    pub rho: Vec<u32>,
    pub rho_min: u64,
}

impl FlyoverLoads {
    pub fn beta(&self, g: &TopologyGraph, node: usize, a: IfId, b: IfId) -> Bandwidth {
        let rho = self.rho[self.index.id(node, a, b)];
        flyover_bandwidth(g.matrices[node].get(a, b), rho as u64, self.rho_min)
    }

    /// Bandwidth one source obtains for one path over the flyover.
    pub fn share(&self, g: &TopologyGraph, u: &Usage, strategy: Strategy) -> Bandwidth {
        let beta = self.beta(g, u.node, u.ingress, u.egress);
        match strategy {
            Strategy::Maximum => beta,
            Strategy::Concurrent => Bandwidth(beta.0 / u.paths as u64),
        }
    }
}

#[cfg(feature = "parallel")]
fn per_source<T: Send>(n: usize, parallel: bool, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    if parallel {
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn per_source<T>(n: usize, _parallel: bool, f: impl Fn(usize) -> T) -> Vec<T> {
    (0..n).map(f).collect()
}

fn count_requesters(g: &TopologyGraph, samples: &[Vec<usize>], index: &PairIndex, parallel: bool) -> Vec<u32> {
    let ids = |s: usize| -> Vec<usize> {
        let tree = PathTree::new(g, s);
        source_usage(g, &tree, &samples[s])
            .iter()
            .map(|u| index.id(u.node, u.ingress, u.egress))
            .collect()
    };
    #[cfg(feature = "parallel")]
    if parallel {
        return (0..g.len())
            .into_par_iter()
            .fold(
                || vec![0u32; index.len()],
                |mut acc, s| {
                    for i in ids(s) {
                        acc[i] += 1;
                    }
                    acc
                },
            )
            .reduce(
                || vec![0u32; index.len()],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                    a
                },
            );
    }
    let _ = parallel;
    let mut rho = vec![0u32; index.len()];
    for s in 0..g.len() {
        for i in ids(s) {
            rho[i] += 1;
        }
    }
    rho
}

/// `samples[s]` lists the destinations of source `s`.
pub fn flyover_loads(g: &TopologyGraph, samples: &[Vec<usize>], rho_min: u64) -> FlyoverLoads {
    load_impl(g, samples, rho_min, true)
}

pub fn flyover_loads_sequential(g: &TopologyGraph, samples: &[Vec<usize>], rho_min: u64) -> FlyoverLoads {
    load_impl(g, samples, rho_min, false)
}

fn load_impl(g: &TopologyGraph, samples: &[Vec<usize>], rho_min: u64, parallel: bool) -> FlyoverLoads {
    assert_eq!(samples.len(), g.len());
    let index = PairIndex::new(g);
    let rho = count_requesters(g, samples, &index, parallel);
    FlyoverLoads { index, rho, rho_min }
}

/// End-to-end reservation sizes, `sizes[s][k]` for destination `samples[s][k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reservations {
    pub strategy: Strategy,
    pub samples: Vec<Vec<usize>>,
    pub sizes: Vec<Vec<Bandwidth>>,
}

impl Reservations {
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Bandwidth)> + '_ {
        self.samples.iter().zip(&self.sizes).enumerate().flat_map(|(s, (d, a))| {
            d.iter().zip(a).map(move |(&j, &v)| (s, j, v))
        })
    }
}

/// Size of each source's reservation to each of its destinations: the
/// minimum over the flyovers on the path of the share that path gets.
pub fn reservation_sizes(
    g: &TopologyGraph,
    loads: &FlyoverLoads,
    samples: &[Vec<usize>],
    strategy: Strategy,
) -> Reservations {
    sizes_impl(g, loads, samples, strategy, true)
}

pub fn reservation_sizes_sequential(
    g: &TopologyGraph,
    loads: &FlyoverLoads,
    samples: &[Vec<usize>],
    strategy: Strategy,
) -> Reservations {
    sizes_impl(g, loads, samples, strategy, false)
}

fn sizes_impl(
    g: &TopologyGraph,
    loads: &FlyoverLoads,
    samples: &[Vec<usize>],
    strategy: Strategy,
    parallel: bool,
) -> Reservations {
    let sizes = per_source(g.len(), parallel, |s| {
        let tree = PathTree::new(g, s);
        let dests = &samples[s];
        let cnt = subtree_counts(&tree, dests);
        let mut best = vec![Bandwidth(u64::MAX); g.len()];
        for &v in tree.order.iter().skip(1) {
            if cnt[v] == 0 {
                continue;
            }
            let p = tree.parent[v];
            let u = Usage {
                node: p,
                ingress: ingress_of(g, &tree, p),
                egress: iface(g, p, v),
                paths: cnt[v],
            };
            best[v] = best[p].min(loads.share(g, &u, strategy));
        }
        dests
            .iter()
            .map(|&d| {
                let last = Usage {
                    node: d,
                    ingress: iface(g, d, tree.parent[d]),
                    egress: IfId(0),
                    paths: 1,
                };
                best[d].min(loads.share(g, &last, strategy))
            })
            .collect()
    });
    Reservations {
        strategy,
        samples: samples.to_vec(),
        sizes,
    }
}

pub fn compute_reservations(g: &TopologyGraph, samples: &[Vec<usize>], strategy: Strategy, rho_min: u64) -> Reservations {
    let loads = flyover_loads(g, samples, rho_min);
    reservation_sizes(g, &loads, samples, strategy)
}

pub fn compute_reservations_sequential(
    g: &TopologyGraph,
    samples: &[Vec<usize>],
    strategy: Strategy,
    rho_min: u64,
) -> Reservations {
    let loads = flyover_loads_sequential(g, samples, rho_min);
    reservation_sizes_sequential(g, &loads, samples, strategy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;
    use crate::{generate_topology, sample, ExperimentConfig};

    fn line() -> TopologyGraph {
        TopologyGraph::from_edges(
            3,
            vec![
                Edge { u: 0, v: 1, capacity: Bandwidth::gbps(40) },
                Edge { u: 1, v: 2, capacity: Bandwidth::gbps(80) },
            ],
        )
    }

    #[test]
    fn tree_prefers_lowest_parent() {
        // Square 0-1, 0-2, 1-3, 2-3: node 3 reachable via 1 or 2.
        let e = |u, v| Edge { u, v, capacity: Bandwidth::gbps(40) };
        let g = TopologyGraph::from_edges(4, vec![e(0, 2), e(0, 1), e(2, 3), e(1, 3)]);
        let t = PathTree::new(&g, 0);
        assert_eq!(t.path(3), Some(vec![0, 1, 3]));
        let t = PathTree::new(&g, 3);
        assert_eq!(t.path(0), Some(vec![3, 1, 0]));
    }

    #[test]
    fn pair_index_roundtrip() {
        let g = line();
        let idx = PairIndex::new(&g);
        assert_eq!(idx.len(), 4 + 9 + 4);
        for id in 0..idx.len() {
            let (n, a, b) = idx.decode(id);
            assert_eq!(idx.id(n, a, b), id);
        }
    }

    #[test]
    fn line_single_demand() {
        let g = line();
        // A: caps (40, 40); B: caps (80, 40, 80); C: caps (80, 80).
        let samples = vec![vec![2], vec![], vec![]];
        let res = compute_reservations(&g, &samples, Strategy::Concurrent, 1);
        // A (0 -> 1): 40 / 1.  B (1 -> 2): column 2 holds C_2 = 80 split over two rows
        // = 40, row 1 (C = 40) sums to 40 + 40 = 80 > 40, scaled by 1/2 -> 20.
        // C (1 -> 0): column 0 = 80 from a single row -> 80.
        assert_eq!(g.matrices[0].get(IfId(0), IfId(1)), Bandwidth::gbps(40));
        assert_eq!(g.matrices[1].get(IfId(1), IfId(2)), Bandwidth::gbps(20));
        assert_eq!(g.matrices[2].get(IfId(1), IfId(0)), Bandwidth::gbps(80));
        assert_eq!(res.sizes, vec![vec![Bandwidth::gbps(20)], vec![], vec![]]);
    }

    #[test]
    fn two_sources_split_a_pair() {
        // Star around node 1: sources 0 and 2 both send to 3 through (·, 3) at node 1
        // using different ingresses, and both use (1 -> 0) at node 3.
        let e = |u, v| Edge { u, v, capacity: Bandwidth::gbps(40) };
        let g = TopologyGraph::from_edges(4, vec![e(0, 1), e(1, 2), e(1, 3)]);
        let samples = vec![vec![3], vec![], vec![3], vec![]];
        let loads = flyover_loads(&g, &samples, 1);
        let m = g.matrices[3].get(IfId(1), IfId(0));
        assert_eq!(loads.rho[loads.index.id(3, IfId(1), IfId(0))], 2);
        assert_eq!(loads.beta(&g, 3, IfId(1), IfId(0)), Bandwidth(m.0 / 2));
        assert_eq!(loads.rho[loads.index.id(1, IfId(1), IfId(3))], 1);
    }

    #[test]
    fn concurrent_divides_by_paths_per_flyover() {
        let g = line();
        let samples = vec![vec![1, 2], vec![], vec![]];
        let loads = flyover_loads(&g, &samples, 1);
        let usage = source_usage(&g, &PathTree::new(&g, 0), &samples[0]);
        let first = usage.iter().find(|u| u.node == 0).unwrap();
        assert_eq!(first.paths, 2);
        assert_eq!(loads.share(&g, first, Strategy::Concurrent), Bandwidth::gbps(20));
        assert_eq!(loads.share(&g, first, Strategy::Maximum), Bandwidth::gbps(40));
        let c = reservation_sizes(&g, &loads, &samples, Strategy::Concurrent);
        let m = reservation_sizes(&g, &loads, &samples, Strategy::Maximum);
        assert!(c.iter().zip(m.iter()).all(|(x, y)| x.2 <= y.2));
    }

    #[test]
    fn usage_matches_explicit_paths() {
        let g = generate_topology(&ExperimentConfig {
            n_nodes: 80,
            seed: 5,
            ..ExperimentConfig::default()
        });
        for s in [0, 17, 79] {
            let dests = sample::sample_destinations(&g, s, 0.2, &mut sample::source_rng(5, s));
            let tree = PathTree::new(&g, s);
            let usage = source_usage(&g, &tree, &dests);
            let mut expect = std::collections::BTreeMap::new();
            for &d in &dests {
                let p = tree.path(d).unwrap();
                for i in 0..p.len() {
                    let a = if i == 0 { IfId(0) } else { iface(&g, p[i], p[i - 1]) };
                    let b = if i + 1 == p.len() { IfId(0) } else { iface(&g, p[i], p[i + 1]) };
                    *expect.entry((p[i], a, b)).or_insert(0u32) += 1;
                }
            }
            let got: std::collections::BTreeMap<_, _> =
                usage.iter().map(|u| ((u.node, u.ingress, u.egress), u.paths)).collect();
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn sequential_matches_parallel() {
        let g = generate_topology(&ExperimentConfig {
            n_nodes: 150,
            seed: 8,
            ..ExperimentConfig::default()
        });
        let samples = sample::truncate_orders(&sample::all_orders(&g, 8), 0.3);
        for st in [Strategy::Concurrent, Strategy::Maximum] {
            assert_eq!(
                compute_reservations(&g, &samples, st, 1),
                compute_reservations_sequential(&g, &samples, st, 1)
            );
        }
    }
}
