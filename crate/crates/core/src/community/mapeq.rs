//! Two-level map equation for an undirected weighted walk.
//!
//! With visit rates p_α = s_α / 2W and module exit rates q_m equal to the
//! cut weight of m over 2W,
//!
//! L = q log q − 2 Σ q_m log q_m − Σ p_α log p_α + Σ (q_m + p_m) log(q_m + p_m)
//!
//! in bits, where q = Σ q_m and p_m = Σ_{α∈m} p_α.

use super::graph::{GroupPartition, WeightedGraph};
use crate::error::{Error, Result};
use crate::num::{plogp, Real};

/// Codelength of `partition` on `graph`. Every node must carry a label.
pub fn map_equation_codelength<F: Real>(graph: &WeightedGraph, partition: &GroupPartition) -> Result<F> {
    if graph.nodes.is_empty() {
        return Err(Error::Empty("graph"));
    }
    let modules = graph
        .nodes
        .iter()
        .map(|id| partition.label_of(id).map(|l| l as usize).ok_or_else(|| Error::UnknownTrader(id.to_string())))
        .collect::<Result<Vec<usize>>>()?;
    Ok(codelength(graph.n_nodes(), &graph.edges, &modules))
}

/// Codelength of per-node module ids (arbitrary values) over an edge list.
/// Module sums are accumulated in ascending module id, so equal partitions
/// always give bit-identical results.
pub(crate) fn codelength<F: Real>(n: usize, edges: &[(usize, usize, u64)], modules: &[usize]) -> F {
    let two_w: u64 = 2 * edges.iter().map(|e| e.2).sum::<u64>();
    if two_w == 0 {
        return F::zero();
    }
    let mut strength = vec![0u64; n];
    for &(i, j, w) in edges {
        strength[i] += w;
        strength[j] += w;
    }
    let mut ids: Vec<usize> = modules.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let slot = |m: usize| ids.binary_search(&m).unwrap();
    // integer accumulation keeps the sums exact
    let mut exit = vec![0u64; ids.len()];
    let mut flow = vec![0u64; ids.len()];
    for (a, &s) in strength.iter().enumerate() {
        flow[slot(modules[a])] += s;
    }
    for &(i, j, w) in edges {
        if modules[i] != modules[j] {
            exit[slot(modules[i])] += w;
            exit[slot(modules[j])] += w;
        }
    }
    let norm = F::from_u64(two_w).unwrap();
    let r = |x: u64| F::from_u64(x).unwrap() / norm;
    let q: u64 = exit.iter().sum();
    let mut l = plogp(r(q));
    for k in 0..ids.len() {
        l += plogp(r(exit[k] + flow[k])) - F::lit(2.0) * plogp(r(exit[k]));
    }
    for &s in &strength {
        l -= plogp(r(s));
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::TraderId;

    fn graph(n: usize, edges: &[(usize, usize)]) -> WeightedGraph {
        let name = |k: usize| TraderId::new(format!("n{k:02}"));
        WeightedGraph::from_edges((0..n).map(name), edges.iter().map(|&(a, b)| (name(a), name(b), 1))).unwrap()
    }

    fn modules(g: &WeightedGraph, m: &[usize]) -> GroupPartition {
        GroupPartition::from_modules(&g.nodes, m)
    }

    #[test]
    fn one_edge_one_module_is_one_bit() {
        let g = graph(2, &[(0, 1)]);
        let l: f64 = map_equation_codelength(&g, &modules(&g, &[0, 0])).unwrap();
        assert!((l - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_node_is_zero_bits() {
        let g = graph(1, &[]);
        let l: f64 = map_equation_codelength(&g, &modules(&g, &[0])).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn empty_graph_is_error() {
        let g = graph(0, &[]);
        assert!(map_equation_codelength::<f64>(&g, &GroupPartition::default()).is_err());
    }

    /// Independent evaluation from the entropy form
    /// L = q H(Q) + Σ p↻_m H(P_m), with all rates written out by hand.
    fn entropy_form(n: usize, edges: &[(usize, usize)], m: &[usize]) -> f64 {
        let two_w = 2.0 * edges.len() as f64;
        let mut p = vec![0.0; n];
        for &(a, b) in edges {
            p[a] += 1.0 / two_w;
            p[b] += 1.0 / two_w;
        }
        let k = m.iter().max().unwrap() + 1;
        let mut q = vec![0.0; k];
        for &(a, b) in edges {
            if m[a] != m[b] {
                q[m[a]] += 1.0 / two_w;
                q[m[b]] += 1.0 / two_w;
            }
        }
        let h = |xs: &[f64]| -> f64 {
            let t: f64 = xs.iter().sum();
            if t <= 0.0 {
                return 0.0;
            }
            -xs.iter().filter(|&&x| x > 0.0).map(|&x| (x / t) * (x / t).log2()).sum::<f64>()
        };
        let qt: f64 = q.iter().sum();
        let mut l = qt * h(&q);
        for mm in 0..k {
            let mut parts = vec![q[mm]];
            parts.extend((0..n).filter(|&a| m[a] == mm).map(|a| p[a]));
            let tot: f64 = parts.iter().sum();
            l += tot * h(&parts);
        }
        l
    }

    fn two_cliques() -> (usize, Vec<(usize, usize)>) {
        let mut e = Vec::new();
        for base in [0, 4] {
            for a in 0..4 {
                for b in a + 1..4 {
                    e.push((base + a, base + b));
                }
            }
        }
        e.push((3, 4));
        (8, e)
    }

    #[test]
    fn two_cliques_prefer_two_modules() {
        let (n, e) = two_cliques();
        let g = graph(n, &e);
        let one: f64 = map_equation_codelength(&g, &modules(&g, &[0; 8])).unwrap();
        let two: f64 = map_equation_codelength(&g, &modules(&g, &[0, 0, 0, 0, 1, 1, 1, 1])).unwrap();
        assert!(two < one);
        assert!((one - entropy_form(n, &e, &[0; 8])).abs() < 1e-12);
        assert!((two - entropy_form(n, &e, &[0, 0, 0, 0, 1, 1, 1, 1])).abs() < 1e-12);
    }

    #[test]
    fn matches_entropy_form_on_arbitrary_partitions() {
        let (n, e) = two_cliques();
        for m in [[0, 1, 2, 3, 4, 5, 6, 7], [0, 0, 1, 1, 2, 2, 3, 3], [0, 1, 0, 1, 0, 1, 0, 1]] {
            let g = graph(n, &e);
            let l: f64 = map_equation_codelength(&g, &modules(&g, &m)).unwrap();
            assert!((l - entropy_form(n, &e, &m)).abs() < 1e-12, "{m:?}");
        }
    }

    #[test]
    fn relabeling_nodes_keeps_codelength() {
        let (n, e) = two_cliques();
        let perm = [5, 2, 7, 0, 1, 6, 3, 4];
        let pe: Vec<(usize, usize)> = e.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        let m = [0, 0, 0, 0, 1, 1, 1, 1];
        let mut pm = [0; 8];
        for a in 0..8 {
            pm[perm[a]] = m[a];
        }
        let g1 = graph(n, &e);
        let g2 = graph(n, &pe);
        let a: f64 = map_equation_codelength(&g1, &modules(&g1, &m)).unwrap();
        let b: f64 = map_equation_codelength(&g2, &modules(&g2, &pm)).unwrap();
        assert!((a - b).abs() < 1e-14);
    }
}
