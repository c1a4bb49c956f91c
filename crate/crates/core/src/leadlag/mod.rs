//! Group-level state aggregation, lagged co-occurrence validation and the
//! trader-level lead-lag adjacency it induces.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::community::GroupPartition;
use crate::error::{Error, Result};
use crate::ingest::{validate_rho0, State, StateMatrix, TimeGrid, TraderId, TraderSliceState};
use crate::num::Real;
use crate::svn::network::apply_bh;
use crate::svn::scan::{scan, StateBits};
use crate::svn::FdrConfig;

/// Per-slice aggregate of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStateSeries<F> {
    pub label: u32,
    pub cells: Vec<TraderSliceState<F>>,
}

impl<F: Real> GroupStateSeries<F> {
    pub fn states(&self) -> impl Iterator<Item = State> + '_ {
        self.cells.iter().map(|c| c.sigma)
    }
}

/// All group series of one window, sorted by label.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStates<F> {
    pub grid: TimeGrid,
    pub series: Vec<GroupStateSeries<F>>,
}

impl<F: Real> GroupStates<F> {
    pub fn labels(&self) -> Vec<u32> {
        self.series.iter().map(|s| s.label).collect()
    }

    /// Time-reversed copy: slice order and grid reversed, with slice
    /// intervals mirrored so contiguity is preserved.
    pub fn reversed(&self) -> Self {
        let mut grid = self.grid.clone();
        grid.slices.reverse();
        for s in &mut grid.slices {
            let (a, b) = (-s.end_ms, -s.start_ms);
            s.start_ms = a;
            s.end_ms = b;
        }
        GroupStates {
            grid,
            series: self
                .series
                .iter()
                .map(|s| GroupStateSeries {
                    label: s.label,
                    cells: s.cells.iter().rev().copied().collect(),
                })
                .collect(),
        }
    }
}

/// Sum V and G over the members of each group and classify the sums with
/// the trader rule. Traders without a label are left out; groups with no
/// member in the matrix produce no series.
pub fn aggregate_groups<F: Real>(matrix: &StateMatrix<F>, partition: &GroupPartition, rho0: F) -> Result<GroupStates<F>> {
    validate_rho0(rho0)?;
    if partition.is_empty() {
        return Err(Error::Empty("partition"));
    }
    let t = matrix.n_slices();
    let mut sums: BTreeMap<u32, Vec<TraderSliceState<F>>> = BTreeMap::new();
    for (i, id) in matrix.traders().iter().enumerate() {
        let Some(label) = partition.label_of(id) else { continue };
        let acc = sums.entry(label).or_insert_with(|| vec![TraderSliceState::default(); t]);
        for (a, c) in acc.iter_mut().zip(matrix.row(i)) {
            a.v += c.v;
            a.g += c.g;
            a.trades += c.trades;
        }
    }
    let series = sums
        .into_iter()
        .map(|(label, mut cells)| {
            for c in &mut cells {
                c.sigma = if c.trades == 0 { State::Inactive } else { State::classify(c.v, c.g, rho0) };
            }
            GroupStateSeries { label, cells }
        })
        .collect();
    Ok(GroupStates {
        grid: matrix.grid().clone(),
        series,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadLagEdge<F> {
    pub from: u32,
    pub to: u32,
    pub state_from: State,
    pub state_to: State,
    pub co_count: u64,
    pub n_from: u64,
    pub n_to: u64,
    pub p_value: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadLagNetwork<F> {
    pub groups: Vec<u32>,
    /// Sorted by (from, to, state_from, state_to).
    pub edges: Vec<LeadLagEdge<F>>,
    pub lag: usize,
    /// Number of aligned slice pairs.
    pub t: u64,
    pub p0: f64,
    pub threshold: F,
    /// 9 · N² with N the number of groups.
    pub n_tests: u64,
}

/// Start indices `t` such that slices `t..=t+lag` are back to back.
pub fn lag_positions(grid: &TimeGrid, lag: usize) -> Vec<usize> {
    (0..grid.len()).filter(|&t| grid.run_is_contiguous(t, lag)).collect()
}

/// Validate "σ_g = s at t is followed by σ_g' = s' at t + lag" for every
/// ordered group pair (self pairs included) and all nine state pairs.
/// Lagged pairs never span a gap in the grid. The family size is 9 · N²;
/// hypotheses that cannot be tested count with p = 1.
pub fn build_leadlag<F: Real>(groups: &GroupStates<F>, cfg: &FdrConfig, lag: usize) -> Result<LeadLagNetwork<F>> {
    cfg.validate()?;
    let n = groups.series.len() as u64;
    let positions = lag_positions(&groups.grid, lag);
    let t = positions.len();
    let mut net = LeadLagNetwork {
        groups: groups.labels(),
        edges: Vec::new(),
        lag,
        t: t as u64,
        p0: cfg.p0,
        threshold: F::zero(),
        n_tests: 9 * n * n,
    };
    if n == 0 || t == 0 {
        return Ok(net);
    }
    let lead: Vec<StateBits> = groups
        .series
        .iter()
        .map(|s| StateBits::new(positions.iter().map(|&p| s.cells[p].sigma), t))
        .collect();
    let follow: Vec<StateBits> = groups
        .series
        .iter()
        .map(|s| StateBits::new(positions.iter().map(|&p| s.cells[p + lag].sigma), t))
        .collect();
    let p0 = F::lit(cfg.p0);
    let (hits, _) = scan(&lead, &follow, t as u64, p0, true);
    let (threshold, kept) = apply_bh(hits, net.n_tests, p0);
    net.threshold = threshold;
    net.edges = kept
        .into_iter()
        .map(|h| LeadLagEdge {
            from: net.groups[h.i],
            to: net.groups[h.j],
            state_from: State::ACTIVE[h.si],
            state_to: State::ACTIVE[h.sj],
            co_count: h.x,
            n_from: h.ni,
            n_to: h.nj,
            p_value: h.p,
        })
        .collect();
    Ok(net)
}

/// Binary trader-level adjacency Λ over a trader population.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TraderLeadLagAdjacency {
    /// Population the adjacency is defined on, sorted.
    pub traders: Vec<TraderId>,
    /// `(i, j)` index pairs into `traders` with Λ_ij = 1, sorted.
    pub links: Vec<(u32, u32)>,
}

impl TraderLeadLagAdjacency {
    /// From explicit id pairs; the population is `traders` plus every id
    /// named in a link.
    pub fn from_links<'a>(traders: impl IntoIterator<Item = &'a TraderId>, links: impl IntoIterator<Item = (TraderId, TraderId)>) -> Self {
        let links: Vec<(TraderId, TraderId)> = links.into_iter().collect();
        let mut ids: Vec<TraderId> = traders.into_iter().cloned().collect();
        ids.extend(links.iter().flat_map(|(a, b)| [a.clone(), b.clone()]));
        ids.sort();
        ids.dedup();
        let idx = |id: &TraderId| ids.binary_search(id).unwrap() as u32;
        let mut pairs: Vec<(u32, u32)> = links.iter().map(|(a, b)| (idx(a), idx(b))).collect();
        pairs.sort_unstable();
        pairs.dedup();
        TraderLeadLagAdjacency { links: pairs, traders: ids }
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    pub fn contains(&self, i: &TraderId, j: &TraderId) -> bool {
        match (self.traders.binary_search(i), self.traders.binary_search(j)) {
            (Ok(a), Ok(b)) => self.links.binary_search(&(a as u32, b as u32)).is_ok(),
            _ => false,
        }
    }

    pub fn id_links(&self) -> impl Iterator<Item = (&TraderId, &TraderId)> {
        self.links.iter().map(|&(a, b)| (&self.traders[a as usize], &self.traders[b as usize]))
    }
}

/// Λ_ij = 1 iff some validated edge goes from group(i) to group(j).
pub fn expand_trader_leadlag<F>(net: &LeadLagNetwork<F>, partition: &GroupPartition) -> TraderLeadLagAdjacency {
    let group_links: BTreeSet<(u32, u32)> = net.edges.iter().map(|e| (e.from, e.to)).collect();
    let traders: Vec<TraderId> = partition.assignment.keys().cloned().collect();
    let labels: Vec<u32> = partition.assignment.values().copied().collect();
    let mut members: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (k, &l) in labels.iter().enumerate() {
        members.entry(l).or_default().push(k as u32);
    }
    let mut links = Vec::new();
    for &(g, h) in &group_links {
        if let (Some(a), Some(b)) = (members.get(&g), members.get(&h)) {
            for &i in a {
                for &j in b {
                    links.push((i, j));
                }
            }
        }
    }
    links.sort_unstable();
    TraderLeadLagAdjacency { traders, links }
}

pub const LEADLAG_COLUMNS: [&str; 6] = ["from_group", "to_group", "state_from", "state_to", "co_count", "p_value"];

pub fn write_leadlag<F: Real, W: Write>(out: W, net: &LeadLagNetwork<F>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LEADLAG_COLUMNS)?;
    for e in &net.edges {
        w.write_record([
            e.from.to_string(),
            e.to.to_string(),
            e.state_from.code().to_string(),
            e.state_to.code().to_string(),
            e.co_count.to_string(),
            e.p_value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Λ as a sparse triplet list `i,j,value`.
pub fn write_adjacency<W: Write>(out: W, adj: &TraderLeadLagAdjacency) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "j", "value"])?;
    for (a, b) in adj.id_links() {
        w.write_record([a.as_str(), b.as_str(), "1"])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::SessionConfig;
    use State::*;

    fn part(pairs: &[(&str, u32)]) -> GroupPartition {
        GroupPartition::new(pairs.iter().map(|&(id, l)| (TraderId::from(id), l)).collect())
    }

    fn cells(vs: &[(f64, f64)]) -> Vec<TraderSliceState<f64>> {
        vs.iter()
            .map(|&(v, g)| TraderSliceState::from_volumes(v, g, u32::from(g > 0.0), 0.01))
            .collect()
    }

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::contiguous(SessionConfig::default(), 0, n).unwrap()
    }

    #[test]
    fn group_sum_and_state() {
        let m = StateMatrix::from_rows(
            grid(2),
            vec![("a".into(), cells(&[(5.0, 5.0), (0.0, 0.0)])), ("b".into(), cells(&[(-2.0, 2.0), (0.0, 0.0)]))],
        )
        .unwrap();
        let g = aggregate_groups(&m, &part(&[("a", 1), ("b", 1)]), 0.01).unwrap();
        let c = g.series[0].cells[0];
        assert_eq!((c.v, c.g, c.sigma), (3.0, 7.0, Buy));
        assert!((c.rho().unwrap() - 3.0 / 7.0).abs() < 1e-15);
        assert_eq!(g.series[0].cells[1].sigma, Inactive);
    }

    #[test]
    fn singleton_group_is_identity() {
        let row = cells(&[(5.0, 5.0), (-1.0, 3.0), (0.0, 0.0), (0.01, 2.0)]);
        let m = StateMatrix::from_rows(grid(4), vec![("a".into(), row.clone())]).unwrap();
        let g = aggregate_groups(&m, &part(&[("a", 4)]), 0.01).unwrap();
        assert_eq!(g.series[0].cells, row);
        assert_eq!(g.series[0].label, 4);
    }

    #[test]
    fn empty_partition_is_error() {
        let m = StateMatrix::<f64>::empty(grid(2));
        assert!(aggregate_groups(&m, &GroupPartition::default(), 0.01).is_err());
    }

    #[test]
    fn no_groups_no_edges() {
        let gs = GroupStates::<f64> { grid: grid(10), series: vec![] };
        let net = build_leadlag(&gs, &FdrConfig::default(), 1).unwrap();
        assert!(net.edges.is_empty());
        assert_eq!(net.n_tests, 0);
    }

    #[test]
    fn lag_pairs_skip_session_gaps() {
        let days = TimeGrid::for_dates(
            SessionConfig::default(),
            chrono::NaiveDate::from_ymd_opt(2024, 1, 5).unwrap(),
            chrono::NaiveDate::from_ymd_opt(2024, 1, 8).unwrap(),
        )
        .unwrap();
        // Friday and Monday, 7 slices each: 6 lag pairs per day
        assert_eq!(lag_positions(&days, 1).len(), 12);
        assert_eq!(lag_positions(&days, 0).len(), 14);
        assert_eq!(lag_positions(&days, 2).len(), 10);
    }

    #[test]
    fn expansion_follows_groups() {
        let p = part(&[("1", 1), ("2", 1), ("3", 2)]);
        let edge = |from, to| LeadLagEdge {
            from,
            to,
            state_from: Buy,
            state_to: Buy,
            co_count: 1,
            n_from: 1,
            n_to: 1,
            p_value: 0.001f64,
        };
        let mut net = LeadLagNetwork {
            groups: vec![1, 2],
            edges: vec![edge(1, 2)],
            lag: 1,
            t: 100,
            p0: 0.05,
            threshold: 0.001,
            n_tests: 36,
        };
        let lam = expand_trader_leadlag(&net, &p);
        let got: Vec<(String, String)> = lam.id_links().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        assert_eq!(got, vec![("1".into(), "3".into()), ("2".into(), "3".into())]);

        net.edges = vec![edge(1, 1)];
        let lam = expand_trader_leadlag(&net, &p);
        assert_eq!(lam.n_links(), 4);
        assert!(lam.contains(&"2".into(), &"1".into()));

        net.edges.clear();
        assert_eq!(expand_trader_leadlag(&net, &p).n_links(), 0);
    }
}
