//! Greedy map-equation minimisation: local node moves, aggregation of
//! modules into super-nodes, and node-level refinement, restarted with
//! several seeds.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::graph::{GroupPartition, WeightedGraph};
use super::mapeq::codelength;
use crate::num::{plogp, Real};
use crate::seed;

pub const DEFAULT_RESTARTS: usize = 10;
const MAX_PASSES: usize = 200;
const MAX_REFINEMENTS: usize = 20;

/// Node of the (possibly aggregated) flow graph. Rates are normalised by 2W.
#[derive(Debug, Clone)]
struct FlowNode<F> {
    flow: F,
    exit: F,
    adj: Vec<(usize, F)>,
}

#[derive(Debug, Clone, Copy)]
struct ModStat<F> {
    exit: F,
    flow: F,
    size: usize,
}

fn tolerance<F: Real>() -> F {
    F::lit(1e-10).max(F::epsilon() * F::lit(64.0))
}

/// Flow graph of one connected component with local indices.
fn flow_nodes<F: Real>(n: usize, edges: &[(usize, usize, u64)]) -> Vec<FlowNode<F>> {
    let two_w = F::from_u64(2 * edges.iter().map(|e| e.2).sum::<u64>()).unwrap();
    let mut nodes: Vec<FlowNode<F>> = (0..n).map(|_| FlowNode { flow: F::zero(), exit: F::zero(), adj: Vec::new() }).collect();
    for &(i, j, w) in edges {
        let r = F::from_u64(w).unwrap() / two_w;
        nodes[i].adj.push((j, r));
        nodes[j].adj.push((i, r));
        nodes[i].flow += r;
        nodes[j].flow += r;
    }
    for nd in &mut nodes {
        nd.exit = nd.flow;
        nd.adj.sort_by_key(|&(v, _)| v);
    }
    nodes
}

/// Collapse modules into super-nodes; modules are renumbered by first
/// appearance. Returns the new nodes and the node → super-node map.
fn aggregate<F: Real>(nodes: &[FlowNode<F>], module: &[usize]) -> (Vec<FlowNode<F>>, Vec<usize>) {
    let mut renum = vec![usize::MAX; nodes.len()];
    let mut next = 0;
    let map: Vec<usize> = module
        .iter()
        .map(|&m| {
            if renum[m] == usize::MAX {
                renum[m] = next;
                next += 1;
            }
            renum[m]
        })
        .collect();
    let mut sup: Vec<FlowNode<F>> = (0..next).map(|_| FlowNode { flow: F::zero(), exit: F::zero(), adj: Vec::new() }).collect();
    let mut dense = vec![vec![F::zero(); next]; next];
    for (a, nd) in nodes.iter().enumerate() {
        sup[map[a]].flow += nd.flow;
        for &(b, w) in &nd.adj {
            if map[a] != map[b] {
                dense[map[a]][map[b]] += w;
            }
        }
    }
    for (s, row) in dense.into_iter().enumerate() {
        for (t, w) in row.into_iter().enumerate() {
            if w > F::zero() {
                sup[s].adj.push((t, w));
                sup[s].exit += w;
            }
        }
    }
    (sup, map)
}

/// Local moving with every node starting in module `module[node]`. Returns
/// whether any node moved.
fn local_moving<F: Real>(nodes: &[FlowNode<F>], module: &mut [usize], rng: &mut ChaCha8Rng) -> bool {
    let n = nodes.len();
    let tol = tolerance::<F>();
    let mut stats = vec![ModStat { exit: F::zero(), flow: F::zero(), size: 0 }; n];
    for (a, nd) in nodes.iter().enumerate() {
        let s = &mut stats[module[a]];
        s.flow += nd.flow;
        s.size += 1;
    }
    for (a, nd) in nodes.iter().enumerate() {
        for &(b, w) in &nd.adj {
            if module[a] != module[b] {
                stats[module[a]].exit += w;
            }
        }
    }
    let mut q: F = stats.iter().map(|s| s.exit).sum();

    let mut order: Vec<usize> = (0..n).collect();
    let mut weight_to = vec![F::zero(); n];
    let mut touched: Vec<usize> = Vec::new();
    let mut any = false;
    for _ in 0..MAX_PASSES {
        order.shuffle(rng);
        let mut moved = false;
        for &a in &order {
            let nd = &nodes[a];
            let from = module[a];
            for &(b, w) in &nd.adj {
                let m = module[b];
                if weight_to[m] == F::zero() {
                    touched.push(m);
                }
                weight_to[m] += w;
            }
            touched.sort_unstable();
            let w_from = weight_to[from];
            let sa = stats[from];
            let ex_from = if sa.size == 1 { F::zero() } else { sa.exit - nd.exit + w_from + w_from };
            let fl_from = if sa.size == 1 { F::zero() } else { sa.flow - nd.flow };

            let mut best: Option<(usize, F, F, F)> = None;
            let mut best_delta = F::zero();
            for &to in &touched {
                if to == from {
                    continue;
                }
                let w_to = weight_to[to];
                let sb = stats[to];
                let ex_to = sb.exit + nd.exit - w_to - w_to;
                let fl_to = sb.flow + nd.flow;
                let q_new = q - sa.exit - sb.exit + ex_from + ex_to;
                let delta = plogp(q_new) - plogp(q)
                    - F::lit(2.0) * (plogp(ex_from) + plogp(ex_to) - plogp(sa.exit) - plogp(sb.exit))
                    + plogp(ex_from + fl_from) + plogp(ex_to + fl_to)
                    - plogp(sa.exit + sa.flow)
                    - plogp(sb.exit + sb.flow);
                if delta < best_delta - tol {
                    best_delta = delta;
                    best = Some((to, ex_to, fl_to, q_new));
                }
            }
            for &m in &touched {
                weight_to[m] = F::zero();
            }
            touched.clear();

            if let Some((to, ex_to, fl_to, q_new)) = best {
                stats[from] = ModStat { exit: ex_from, flow: fl_from, size: sa.size - 1 };
                stats[to] = ModStat { exit: ex_to, flow: fl_to, size: stats[to].size + 1 };
                q = q_new;
                module[a] = to;
                moved = true;
                any = true;
            }
        }
        // resynchronise the running total
        q = stats.iter().map(|s| s.exit).sum();
        if !moved {
            break;
        }
    }
    any
}

/// Repeated local moving and aggregation, starting from `initial`.
fn coarsen<F: Real>(base: &[FlowNode<F>], initial: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let (mut level, mut member) = aggregate(base, initial);
    loop {
        let mut module: Vec<usize> = (0..level.len()).collect();
        if !local_moving(&level, &mut module, rng) {
            return member;
        }
        let (next, map) = aggregate(&level, &module);
        for m in &mut member {
            *m = map[*m];
        }
        level = next;
    }
}

fn optimise_component<F: Real>(n: usize, edges: &[(usize, usize, u64)], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let base = flow_nodes::<F>(n, edges);
    let tol = tolerance::<F>();
    let mut best = coarsen(&base, &(0..n).collect::<Vec<_>>(), rng);
    let mut best_l: F = codelength(n, edges, &best);
    for _ in 0..MAX_REFINEMENTS {
        let mut refined = best.clone();
        local_moving(&base, &mut refined, rng);
        let candidate = coarsen(&base, &refined, rng);
        let l: F = codelength(n, edges, &candidate);
        if l < best_l - tol {
            best = candidate;
            best_l = l;
        } else {
            break;
        }
    }
    best
}

/// Renumber module ids by first appearance.
fn canonical(modules: &[usize]) -> Vec<usize> {
    let mut renum = std::collections::HashMap::new();
    modules
        .iter()
        .map(|&m| {
            let k = renum.len();
            *renum.entry(m).or_insert(k)
        })
        .collect()
}

/// Minimise the map equation on every connected component separately.
/// Isolated nodes become singleton groups. `restarts` seeded runs are made
/// per component; the lowest codelength wins, ties going to the
/// lexicographically smallest canonical assignment.
pub fn detect_communities_with<F: Real>(graph: &WeightedGraph, seed: u64, restarts: usize) -> GroupPartition {
    let restarts = restarts.max(1);
    let components = graph.components();
    let mut local_index = vec![0usize; graph.n_nodes()];
    let mut modules = vec![0usize; graph.n_nodes()];
    let mut next_module = 0usize;

    for (c, members) in components.iter().enumerate() {
        for (k, &v) in members.iter().enumerate() {
            local_index[v] = k;
        }
        let edges: Vec<(usize, usize, u64)> = graph
            .edges
            .iter()
            .filter(|e| members.binary_search(&e.0).is_ok())
            .map(|&(i, j, w)| (local_index[i], local_index[j], w))
            .collect();
        let n = members.len();
        let assignment = if edges.is_empty() {
            vec![0; n]
        } else {
            let runs: Vec<(F, Vec<usize>)> = (0..restarts)
                .into_par_iter()
                .map(|r| {
                    let mut rng = seed::rng(seed, &[c as u64, r as u64]);
                    let m = canonical(&optimise_component::<F>(n, &edges, &mut rng));
                    (codelength::<F>(n, &edges, &m), m)
                })
                .collect();
            let mut best = runs
                .into_iter()
                .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(&b.1)))
                .unwrap();
            // one module for the whole component
            let whole = vec![0; n];
            let l_whole: F = codelength(n, &edges, &whole);
            if l_whole <= best.0 {
                best = (l_whole, whole);
            }
            best.1
        };
        let k = assignment.iter().max().map_or(0, |m| m + 1);
        for (&v, &m) in members.iter().zip(&assignment) {
            modules[v] = next_module + m;
        }
        next_module += k;
    }
    // The components were optimised apart; check the joint codelength
    // against one module per component.
    let mut per_component = vec![0usize; graph.n_nodes()];
    for (c, members) in components.iter().enumerate() {
        for &v in members {
            per_component[v] = c;
        }
    }
    let n = graph.n_nodes();
    let joint: F = codelength(n, &graph.edges, &modules);
    let coarse: F = codelength(n, &graph.edges, &per_component);
    if coarse < joint {
        modules = per_component;
    }
    GroupPartition::from_modules(&graph.nodes, &modules)
}

pub fn detect_communities<F: Real>(graph: &WeightedGraph, seed: u64) -> GroupPartition {
    detect_communities_with::<F>(graph, seed, DEFAULT_RESTARTS)
}
