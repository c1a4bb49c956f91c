use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{State, TraderId};
use crate::svn::ValidatedNetwork;

/// Undirected graph with positive integer weights; edges stored once with
/// `i < j` (node indices into `nodes`), sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightedGraph {
    pub nodes: Vec<TraderId>,
    pub edges: Vec<(usize, usize, u64)>,
}

impl WeightedGraph {
    /// Build from id-keyed edges; node order is sorted by id. Parallel edges
    /// are summed and self-loops ignored.
    pub fn from_edges(nodes: impl IntoIterator<Item = TraderId>, edges: impl IntoIterator<Item = (TraderId, TraderId, u64)>) -> Result<Self> {
        let mut ids: Vec<TraderId> = nodes.into_iter().collect();
        let edges: Vec<(TraderId, TraderId, u64)> = edges.into_iter().collect();
        ids.extend(edges.iter().flat_map(|(a, b, _)| [a.clone(), b.clone()]));
        ids.sort();
        ids.dedup();
        let idx = |id: &TraderId| ids.binary_search(id).expect("node listed");
        let mut acc: BTreeMap<(usize, usize), u64> = BTreeMap::new();
        for (a, b, w) in &edges {
            let (i, j) = (idx(a), idx(b));
            if i == j || *w == 0 {
                continue;
            }
            *acc.entry((i.min(j), i.max(j))).or_default() += w;
        }
        Ok(WeightedGraph {
            edges: acc.into_iter().map(|((i, j), w)| (i, j, w)).collect(),
            nodes: ids,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Neighbour lists `(node, weight)` in node order.
    pub fn adjacency(&self) -> Vec<Vec<(usize, u64)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(i, j, w) in &self.edges {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }

    /// Connected components, each a sorted list of node indices; components
    /// are ordered by their smallest node.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut comp = vec![usize::MAX; self.nodes.len()];
        let mut out = Vec::new();
        for start in 0..self.nodes.len() {
            if comp[start] != usize::MAX {
                continue;
            }
            let c = out.len();
            let mut members = vec![start];
            comp[start] = c;
            let mut k = 0;
            while k < members.len() {
                for &(v, _) in &adj[members[k]] {
                    if comp[v] == usize::MAX {
                        comp[v] = c;
                        members.push(v);
                    }
                }
                k += 1;
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }
}

/// Count validated links per trader pair, leaving out buy/sell and sell/buy
/// pairs. Every network node is kept, linked or not.
pub fn project_weighted<F>(net: &ValidatedNetwork<F>) -> WeightedGraph {
    let opposite = |p: (State, State)| matches!(p, (State::Buy, State::Sell) | (State::Sell, State::Buy));
    let edges = net
        .edges
        .iter()
        .filter(|e| !opposite(e.state_pair))
        .map(|e| (e.i.clone(), e.j.clone(), 1u64));
    WeightedGraph::from_edges(net.nodes.iter().cloned(), edges).expect("ids are consistent")
}

/// Trader → group label (labels ≥ 1).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GroupPartition {
    pub assignment: BTreeMap<TraderId, u32>,
}

impl GroupPartition {
    pub fn new(assignment: BTreeMap<TraderId, u32>) -> Self {
        GroupPartition { assignment }
    }

    /// From per-node module indices; labels are 1.. in order of first
    /// appearance along `nodes`.
    pub fn from_modules(nodes: &[TraderId], modules: &[usize]) -> Self {
        let mut relabel: BTreeMap<usize, u32> = BTreeMap::new();
        let mut next = 0u32;
        let mut assignment = BTreeMap::new();
        for (id, &m) in nodes.iter().zip(modules) {
            let l = *relabel.entry(m).or_insert_with(|| {
                next += 1;
                next
            });
            assignment.insert(id.clone(), l);
        }
        GroupPartition { assignment }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn label_of(&self, id: &TraderId) -> Option<u32> {
        self.assignment.get(id).copied()
    }

    pub fn labels(&self) -> BTreeSet<u32> {
        self.assignment.values().copied().collect()
    }

    pub fn n_groups(&self) -> usize {
        self.labels().len()
    }

    /// Members of each label, sorted.
    pub fn groups(&self) -> BTreeMap<u32, Vec<TraderId>> {
        let mut g: BTreeMap<u32, Vec<TraderId>> = BTreeMap::new();
        for (id, &l) in &self.assignment {
            g.entry(l).or_default().push(id.clone());
        }
        g
    }

    /// Restrict to the given traders.
    pub fn restrict<'a>(&self, ids: impl IntoIterator<Item = &'a TraderId>) -> GroupPartition {
        GroupPartition {
            assignment: ids.into_iter().filter_map(|id| self.assignment.get_key_value(id)).map(|(k, &v)| (k.clone(), v)).collect(),
        }
    }
}

pub fn write_partition<W: Write>(out: W, p: &GroupPartition) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trader_id", "group_label"])?;
    for (id, l) in &p.assignment {
        w.write_record([id.to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_partition<R: Read>(input: R) -> Result<GroupPartition> {
    let mut rd = csv::Reader::from_reader(input);
    let mut assignment = BTreeMap::new();
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Schema { expected: 2, got: rec.len() });
        }
        let label: u32 = rec[1].parse().map_err(|_| Error::Domain(format!("bad label `{}`", &rec[1])))?;
        if label == 0 {
            return Err(Error::Domain("group labels start at 1".into()));
        }
        assignment.insert(TraderId::new(&rec[0]), label);
    }
    Ok(GroupPartition { assignment })
}
