use std::collections::{BTreeMap, VecDeque};

use helia_core::source::Strategy;
use helia_core::{Bandwidth, IfId};
use helia_topo::graph::Edge;
use helia_topo::sample::{all_orders, destination_order, source_rng, truncate_orders};
use helia_topo::*;
use num_rational::Ratio;
use proptest::prelude::*;

fn graph(n: usize, m: usize, seed: u64) -> TopologyGraph {
    generate_topology(&ExperimentConfig { n_nodes: n, attachment: m, seed, ..Default::default() })
}

/// Upper 0.1% point of the chi-square distribution with 18 degrees of freedom.
const CHI2_18_999: f64 = 42.312_396_331_68;

#[test]
fn single_draws_follow_degree_weights() {
    let g = graph(20, 2, 11);
    let src = 4;
    let deg = g.degrees();
    let total: usize = (0..20).filter(|&j| j != src).map(|j| deg[j]).sum();
    let draws = 10_000;
    let mut counts = vec![0u32; 20];
    for s in 0..draws {
        let d = sample_destinations(&g, src, 0.05, &mut source_rng(1000 + s, src));
        assert_eq!(d.len(), 1);
        counts[d[0]] += 1;
    }
    assert_eq!(counts[src], 0);
    let stat: f64 = (0..20)
        .filter(|&j| j != src)
        .map(|j| {
            let e = draws as f64 * deg[j] as f64 / total as f64;
            (counts[j] as f64 - e).powi(2) / e
        })
        .sum();
    assert!(stat < CHI2_18_999, "chi-square {stat}");
}

#[test]
fn line_reservation_is_path_minimum() {
    let g = TopologyGraph::from_edges(
        3,
        vec![
            Edge { u: 0, v: 1, capacity: Bandwidth::gbps(120) },
            Edge { u: 1, v: 2, capacity: Bandwidth::gbps(40) },
        ],
    );
    // B = node 1 with capacities (internal 120, to A 120, to C 40).
    // Column 2: rows 0 and 1 get 20 each. Row 1: 60 + 20 = 80 <= 120.
    assert_eq!(g.matrices[1].get(IfId(1), IfId(2)), Bandwidth::gbps(20));
    let samples = vec![vec![2], vec![], vec![]];
    for st in [Strategy::Concurrent, Strategy::Maximum] {
        let res = compute_reservations(&g, &samples, st, 1);
        // A (0 -> 1) = 120, B (1 -> 2) = 20, C (1 -> 0) = 40.
        assert_eq!(res.sizes[0], vec![Bandwidth::gbps(20)]);
    }
}

/// Independent reference: paths from explicit BFS distances, flyover
/// users and per-source path counts by enumerating every path.
fn oracle(g: &TopologyGraph, samples: &[Vec<usize>], st: Strategy, rho_min: u64) -> Vec<Vec<u64>> {
    let n = g.len();
    let dist_from = |s: usize| {
        let mut d = vec![usize::MAX; n];
        d[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(x) = q.pop_front() {
            for &y in &g.nodes[x].neighbors {
                if d[y] == usize::MAX {
                    d[y] = d[x] + 1;
                    q.push_back(y);
                }
            }
        }
        d
    };
    let path = |s: usize, t: usize| {
        let d = dist_from(s);
        let mut p = vec![t];
        let mut x = t;
        while x != s {
            x = *g.nodes[x].neighbors.iter().filter(|&&w| d[w] + 1 == d[x]).min().unwrap();
            p.push(x);
        }
        p.reverse();
        p
    };
    let hops = |p: &[usize]| -> Vec<(usize, u16, u16)> {
        (0..p.len())
            .map(|i| {
                let a = if i == 0 { 0 } else { g.nodes[p[i]].interface_to(p[i - 1]).unwrap().0 };
                let b = if i + 1 == p.len() { 0 } else { g.nodes[p[i]].interface_to(p[i + 1]).unwrap().0 };
                (p[i], a, b)
            })
            .collect()
    };
    let mut users: BTreeMap<(usize, u16, u16), std::collections::BTreeSet<usize>> = BTreeMap::new();
    let mut per_src: Vec<BTreeMap<(usize, u16, u16), u64>> = vec![BTreeMap::new(); n];
    let paths: Vec<Vec<Vec<(usize, u16, u16)>>> = samples
        .iter()
        .enumerate()
        .map(|(s, ds)| ds.iter().map(|&t| hops(&path(s, t))).collect())
        .collect();
    for (s, ps) in paths.iter().enumerate() {
        for p in ps {
            for &h in p {
                users.entry(h).or_default().insert(s);
                *per_src[s].entry(h).or_default() += 1;
            }
        }
    }
    paths
        .iter()
        .enumerate()
        .map(|(s, ps)| {
            ps.iter()
                .map(|p| {
                    p.iter()
                        .map(|&h| {
                            let m = g.matrices[h.0].get(IfId(h.1), IfId(h.2)).0;
                            let beta = m / (users[&h].len() as u64).max(rho_min);
                            match st {
                                Strategy::Maximum => beta,
                                Strategy::Concurrent => beta / per_src[s][&h],
                            }
                        })
                        .min()
                        .unwrap()
                })
                .collect()
        })
        .collect()
}

#[test]
fn matches_brute_force_oracle() {
    for (n, m, seed, r) in [(12, 1, 1, 0.5), (25, 2, 2, 0.3), (40, 3, 3, 1.0), (30, 1, 4, 0.1)] {
        let g = graph(n, m, seed);
        let samples = truncate_orders(&all_orders(&g, seed), r);
        for st in [Strategy::Concurrent, Strategy::Maximum] {
            for rho_min in [1, 3] {
                let got = compute_reservations(&g, &samples, st, rho_min);
                let want = oracle(&g, &samples, st, rho_min);
                let got_bps: Vec<Vec<u64>> = got.sizes.iter().map(|v| v.iter().map(|b| b.0).collect()).collect();
                assert_eq!(got_bps, want, "n={n} m={m} {st:?} rho_min={rho_min}");
            }
        }
    }
}

#[test]
fn mixed_cover_matches_enumeration() {
    // Triangle with one weak edge.
    let e = |u, v, c| Edge { u, v, capacity: Bandwidth::gbps(c) };
    let g = TopologyGraph::from_edges(3, vec![e(0, 1, 400), e(1, 2, 400), e(0, 2, 40)]);
    let samples = vec![vec![1, 2], vec![0, 2], vec![0, 1]];
    let res = compute_reservations(&g, &samples, Strategy::Concurrent, 1);
    let want = oracle(&g, &samples, Strategy::Concurrent, 1);
    for gamma in [0u64, 1, 5_000_000_000, 10_000_000_000, 50_000_000_000, 200_000_000_000] {
        let c = gamma_cover(&res, Bandwidth(gamma));
        let manual: Vec<f64> = want
            .iter()
            .map(|a| a.iter().filter(|&&x| x > gamma).count() as f64 / a.len() as f64)
            .collect();
        assert_eq!(c.covers, manual, "gamma {gamma}");
        let mut sorted = manual.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(c.median, sorted[1]);
    }
}

/// Every flyover: sum over sources of the bandwidth they may use at once
/// stays within the matrix entry, in exact rationals.
fn check_no_over_allocation(g: &TopologyGraph, samples: &[Vec<usize>], rho_min: u64) {
    let loads = flyover_loads(g, samples, rho_min);
    let mut granted: BTreeMap<usize, (Ratio<i128>, Ratio<i128>)> = BTreeMap::new();
    for s in 0..g.len() {
        let tree = PathTree::new(g, s);
        for u in reserve::source_usage(g, &tree, &samples[s]) {
            let id = loads.index.id(u.node, u.ingress, u.egress);
            let m = g.matrices[u.node].get(u.ingress, u.egress).0 as i128;
            let rho = (loads.rho[id] as i128).max(rho_min as i128);
            let e = granted.entry(id).or_insert((Ratio::from_integer(0), Ratio::from_integer(0)));
            // Unrounded flyover size, and what the concurrent split actually hands out.
            e.0 += Ratio::new(m, rho);
            let share = loads.share(g, &u, Strategy::Concurrent).0 as i128;
            e.1 += Ratio::from_integer(share * u.paths as i128);
        }
    }
    for (id, (exact, used)) in granted {
        let (node, a, b) = loads.index.decode(id);
        let m = Ratio::from_integer(g.matrices[node].get(a, b).0 as i128);
        assert!(exact <= m, "flyover sizes exceed M at {node} ({a},{b})");
        assert!(used <= exact);
    }
}

#[test]
fn monotone_in_sampling_rate() {
    let rates = [0.05, 0.1, 0.2, 0.5, 1.0];
    for seed in 0..3 {
        let g = graph(300, 1 + seed as usize % 2, seed);
        let orders = all_orders(&g, seed);
        let loads: Vec<FlyoverLoads> = rates
            .iter()
            .map(|&r| flyover_loads(&g, &truncate_orders(&orders, r), 1))
            .collect();
        for w in loads.windows(2) {
            for id in 0..w[0].rho.len() {
                assert!(w[0].rho[id] <= w[1].rho[id]);
                let (node, a, b) = w[0].index.decode(id);
                assert!(w[1].beta(&g, node, a, b) <= w[0].beta(&g, node, a, b));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn invariants(n in 5usize..60, m in 1usize..4, seed in any::<u64>(), r in 0.01f64..=1.0, rho_min in 1u64..5) {
        prop_assume!(m < n);
        let g = graph(n, m, seed);
        prop_assert!(g.is_connected());
        for (node, mat) in g.nodes.iter().zip(&g.matrices) {
            for i in 0..node.capacities.len() {
                prop_assert!(mat.column_sum(i) <= node.capacities[i].0 as u128);
                prop_assert!(mat.row_sum(i) <= node.capacities[i].0 as u128);
            }
        }
        let samples = truncate_orders(&all_orders(&g, seed), r);
        check_no_over_allocation(&g, &samples, rho_min);
        let c = compute_reservations(&g, &samples, Strategy::Concurrent, rho_min);
        let x = compute_reservations(&g, &samples, Strategy::Maximum, rho_min);
        for (p, q) in c.iter().zip(x.iter()) {
            prop_assert_eq!((p.0, p.1), (q.0, q.1));
            prop_assert!(p.2 <= q.2);
        }
        for cov in gamma_cover(&c, Bandwidth::kbps(100)).covers {
            prop_assert!((0.0..=1.0).contains(&cov));
        }
    }

    #[test]
    fn orders_are_permutations(n in 3usize..50, seed in any::<u64>(), src_pick in any::<usize>()) {
        let g = graph(n, 1, seed);
        let src = src_pick % n;
        let mut o = destination_order(&g, src, &mut source_rng(seed, src));
        o.sort();
        let want: Vec<usize> = (0..n).filter(|&j| j != src).collect();
        prop_assert_eq!(o, want);
    }
}
