//! Label continuity across re-clusterings, partition agreement and lead-lag
//! persistence.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::community::GroupPartition;
use crate::error::{Error, Result};
use crate::ingest::TraderId;
use crate::leadlag::TraderLeadLagAdjacency;
use crate::num::Real;

mod rolling;
pub use rolling::{rolling_stability, RollingConfig, StabilityRun};

/// Overlap of an old group with a new one: OA = |g ∩ g'| and
/// OP = |g ∩ g'| / |g ∪ g'|, the latter kept as an exact fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapScore {
    pub oa: usize,
    pub union: usize,
}

impl OverlapScore {
    pub fn between(g: &BTreeSet<&TraderId>, h: &BTreeSet<&TraderId>) -> Self {
        let oa = g.intersection(h).count();
        OverlapScore {
            oa,
            union: g.len() + h.len() - oa,
        }
    }

    pub fn op(&self) -> f64 {
        if self.union == 0 {
            0.0
        } else {
            self.oa as f64 / self.union as f64
        }
    }

    /// Exact comparison of OP values.
    pub fn cmp_op(&self, other: &Self) -> Ordering {
        (self.oa as u128 * other.union as u128).cmp(&(other.oa as u128 * self.union as u128))
    }
}

fn members(p: &GroupPartition) -> BTreeMap<u32, BTreeSet<&TraderId>> {
    let mut m: BTreeMap<u32, BTreeSet<&TraderId>> = BTreeMap::new();
    for (id, &l) in &p.assignment {
        m.entry(l).or_default().insert(id);
    }
    m
}

/// Carry labels of `previous` over to the clusters of `raw`.
///
/// All overlapping (old, new) pairs are ranked by OP, then OA (both
/// descending), then old label and new raw label (ascending), and matched
/// greedily one-to-one. New clusters left unmatched get fresh labels, in raw
/// label order, starting above both `fresh_from` and every previous label.
pub fn relabel_partition_from(previous: &GroupPartition, raw: &GroupPartition, fresh_from: u32) -> GroupPartition {
    let old = members(previous);
    let new = members(raw);
    let mut pairs: Vec<(OverlapScore, u32, u32)> = Vec::new();
    for (&g, gs) in &old {
        for (&h, hs) in &new {
            let s = OverlapScore::between(gs, hs);
            if s.oa > 0 {
                pairs.push((s, g, h));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.0.cmp_op(&a.0)
            .then(b.0.oa.cmp(&a.0.oa))
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut inherit: BTreeMap<u32, u32> = BTreeMap::new();
    let mut used: BTreeSet<u32> = BTreeSet::new();
    for (_, g, h) in pairs {
        if !used.contains(&g) && !inherit.contains_key(&h) {
            used.insert(g);
            inherit.insert(h, g);
        }
    }
    let mut next = old.keys().next_back().map_or(1, |m| m + 1).max(fresh_from).max(1);
    for &h in new.keys() {
        inherit.entry(h).or_insert_with(|| {
            next += 1;
            next - 1
        });
    }
    GroupPartition::new(raw.assignment.iter().map(|(id, h)| (id.clone(), inherit[h])).collect())
}

pub fn relabel_partition(previous: &GroupPartition, raw: &GroupPartition) -> GroupPartition {
    relabel_partition_from(previous, raw, 1)
}

/// Adjusted Rand index over the traders present in both partitions,
/// computed exactly in integers. Returns 1 when the chance-corrected
/// denominator vanishes (both partitions trivial in the same way).
pub fn adjusted_rand_index<F: Real>(p: &GroupPartition, q: &GroupPartition) -> Result<F> {
    let mut table: HashMap<(u32, u32), i128> = HashMap::new();
    let mut rows: HashMap<u32, i128> = HashMap::new();
    let mut cols: HashMap<u32, i128> = HashMap::new();
    let mut n: i128 = 0;
    for (id, &a) in &p.assignment {
        if let Some(&b) = q.assignment.get(id) {
            *table.entry((a, b)).or_default() += 1;
            *rows.entry(a).or_default() += 1;
            *cols.entry(b).or_default() += 1;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::DisjointPartitions);
    }
    let c2 = |x: i128| x * (x - 1) / 2;
    let index: i128 = table.values().map(|&x| c2(x)).sum();
    let a: i128 = rows.values().map(|&x| c2(x)).sum();
    let b: i128 = cols.values().map(|&x| c2(x)).sum();
    let c = c2(n);
    let num = 2 * index * c - 2 * a * b;
    let den = (a + b) * c - 2 * a * b;
    if den == 0 {
        return Ok(F::one());
    }
    Ok(F::from_i128(num).unwrap() / F::from_i128(den).unwrap())
}

/// β = Σ Λ¹_ij Λ²_ij / Σ Λ¹_ij over traders present in both populations;
/// `None` when no link of the first adjacency survives the restriction.
pub fn leadlag_overlap_beta<F: Real>(first: &TraderLeadLagAdjacency, second: &TraderLeadLagAdjacency) -> Option<F> {
    let map: Vec<Option<u32>> = first
        .traders
        .iter()
        .map(|id| second.traders.binary_search(id).ok().map(|k| k as u32))
        .collect();
    let (mut kept, mut den) = (0u64, 0u64);
    for &(i, j) in &first.links {
        if let (Some(a), Some(b)) = (map[i as usize], map[j as usize]) {
            den += 1;
            kept += u64::from(second.links.binary_search(&(a, b)).is_ok());
        }
    }
    (den > 0).then(|| F::from_u64(kept).unwrap() / F::from_u64(den).unwrap())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiverRow {
    pub time: i64,
    pub from_label: u32,
    pub to_label: u32,
    pub trader_count: usize,
}

/// Group-to-group transitions between consecutive labelled partitions,
/// counted over traders present at both times. `time` is that of the later
/// partition.
pub fn export_river(partitions: &[(i64, GroupPartition)]) -> Result<Vec<RiverRow>> {
    if partitions.len() < 2 {
        return Err(Error::Insufficient(format!("{} partitions, river needs 2", partitions.len())));
    }
    let mut rows = Vec::new();
    for w in partitions.windows(2) {
        let ((_, a), (time, b)) = (&w[0], &w[1]);
        let mut flows: BTreeMap<(u32, u32), usize> = BTreeMap::new();
        for (id, &from) in &a.assignment {
            if let Some(&to) = b.assignment.get(id) {
                *flows.entry((from, to)).or_default() += 1;
            }
        }
        rows.extend(flows.into_iter().map(|((from_label, to_label), trader_count)| RiverRow {
            time: *time,
            from_label,
            to_label,
            trader_count,
        }));
    }
    Ok(rows)
}

pub fn write_river<W: Write>(out: W, rows: &[RiverRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "from_label", "to_label", "trader_count"])?;
    for r in rows {
        w.write_record([r.time.to_string(), r.from_label.to_string(), r.to_label.to_string(), r.trader_count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `window_end,value` series; absent values are written as empty fields.
pub fn write_series<F: Real, W: Write>(out: W, series: &[(i64, Option<F>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["window_end", "value"])?;
    for (t, v) in series {
        w.write_record([t.to_string(), v.map(|x| x.to_string()).unwrap_or_default()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn part(pairs: &[(&str, u32)]) -> GroupPartition {
        GroupPartition::new(pairs.iter().map(|&(id, l)| (TraderId::from(id), l)).collect())
    }

    fn seq(labels: &[u32]) -> GroupPartition {
        GroupPartition::new(labels.iter().enumerate().map(|(k, &l)| (TraderId::new(format!("t{k:04}")), l)).collect())
    }

    #[test]
    fn larger_overlap_inherits() {
        let prev = part(&[("A", 1), ("B", 1), ("C", 1)]);
        let raw = part(&[("A", 10), ("B", 10), ("C", 20), ("D", 20), ("E", 20)]);
        let out = relabel_partition(&prev, &raw);
        assert_eq!(out.label_of(&"A".into()), Some(1));
        assert_eq!(out.label_of(&"C".into()), Some(2));
    }

    #[test]
    fn unchanged_partition_keeps_labels() {
        let prev = part(&[("A", 4), ("B", 4), ("C", 9), ("D", 2)]);
        let raw = part(&[("A", 1), ("B", 1), ("C", 2), ("D", 3)]);
        assert_eq!(relabel_partition(&prev, &raw), prev);
    }

    #[test]
    fn split_tie_goes_to_smaller_raw_label() {
        let prev = part(&[("A", 5), ("B", 5), ("C", 5), ("D", 5)]);
        let raw = part(&[("A", 2), ("B", 2), ("C", 1), ("D", 1)]);
        let out = relabel_partition(&prev, &raw);
        assert_eq!(out.label_of(&"C".into()), Some(5));
        assert_eq!(out.label_of(&"A".into()), Some(6));
    }

    #[test]
    fn fresh_labels_respect_floor() {
        let prev = part(&[("A", 1)]);
        let raw = part(&[("A", 1), ("B", 2)]);
        let out = relabel_partition_from(&prev, &raw, 40);
        assert_eq!(out.label_of(&"B".into()), Some(40));
    }

    #[test]
    fn ari_values() {
        let p = seq(&[1, 1, 2, 2]);
        assert_eq!(adjusted_rand_index::<f64>(&p, &p).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index::<f64>(&p, &seq(&[1, 2, 1, 2])).unwrap(), -0.5);
        assert!(matches!(adjusted_rand_index::<f64>(&p, &part(&[("x", 1)])), Err(Error::DisjointPartitions)));
        // both all-singletons
        assert_eq!(adjusted_rand_index::<f64>(&seq(&[1, 2, 3]), &seq(&[3, 1, 2])).unwrap(), 1.0);
    }

    /// Pair-counting form: ARI from the four pair categories.
    fn ari_pairs(p: &[u32], q: &[u32]) -> f64 {
        let n = p.len();
        let (mut ss, mut sd, mut ds, mut dd) = (0f64, 0f64, 0f64, 0f64);
        for i in 0..n {
            for j in i + 1..n {
                match (p[i] == p[j], q[i] == q[j]) {
                    (true, true) => ss += 1.0,
                    (true, false) => sd += 1.0,
                    (false, true) => ds += 1.0,
                    (false, false) => dd += 1.0,
                }
            }
        }
        let num = 2.0 * (ss * dd - sd * ds);
        let den = (ss + sd) * (sd + dd) + (ss + ds) * (ds + dd);
        if den == 0.0 {
            1.0
        } else {
            num / den
        }
    }

    #[test]
    fn random_partitions_average_zero() {
        use rand::Rng;
        let mut total = 0.0;
        for s in 0..100 {
            let mut rng = crate::seed::rng(s, &[]);
            let a: Vec<u32> = (0..1000).map(|_| rng.random_range(1..=10)).collect();
            let b: Vec<u32> = (0..1000).map(|_| rng.random_range(1..=10)).collect();
            total += adjusted_rand_index::<f64>(&seq(&a), &seq(&b)).unwrap();
        }
        assert!((total / 100.0).abs() <= 0.02);
    }

    #[test]
    fn beta_values() {
        let ids: Vec<TraderId> = ["1", "2", "3"].iter().map(|&s| s.into()).collect();
        let l = |pairs: &[(&str, &str)]| TraderLeadLagAdjacency::from_links(&ids, pairs.iter().map(|&(a, b)| (a.into(), b.into())));
        let first = l(&[("1", "2"), ("2", "3")]);
        let second = l(&[("1", "2"), ("3", "1")]);
        assert_eq!(leadlag_overlap_beta::<f64>(&first, &first), Some(1.0));
        assert_eq!(leadlag_overlap_beta::<f64>(&first, &second), Some(0.5));
        assert_eq!(leadlag_overlap_beta::<f64>(&l(&[]), &second), None);
    }

    #[test]
    fn beta_ignores_departed_traders() {
        let t1: Vec<TraderId> = ["1", "2", "3"].iter().map(|&s| s.into()).collect();
        let t2: Vec<TraderId> = ["1", "2"].iter().map(|&s| s.into()).collect();
        let first = TraderLeadLagAdjacency::from_links(&t1, [("1".into(), "2".into()), ("1".into(), "3".into())]);
        let second = TraderLeadLagAdjacency::from_links(&t2, [("1".into(), "2".into())]);
        assert_eq!(leadlag_overlap_beta::<f64>(&first, &second), Some(1.0));
    }

    #[test]
    fn river_rows() {
        let a = part(&[("A", 1), ("B", 1), ("C", 2)]);
        let stable = export_river(&[(1, a.clone()), (2, a.clone()), (3, a.clone())]).unwrap();
        assert!(stable.iter().all(|r| r.from_label == r.to_label));
        assert_eq!(stable.len(), 4);
        let moved = part(&[("A", 1), ("B", 2), ("C", 2)]);
        let rows = export_river(&[(1, a.clone()), (2, moved)]).unwrap();
        let off: Vec<&RiverRow> = rows.iter().filter(|r| r.from_label != r.to_label).collect();
        assert_eq!(off.len(), 1);
        assert_eq!((off[0].from_label, off[0].to_label, off[0].trader_count), (1, 2, 1));
        assert!(export_river(&[(1, a)]).is_err());
    }

    proptest! {
        #[test]
        fn ari_symmetric_and_label_free(
            labels in proptest::collection::vec((1u32..5, 1u32..5), 2..60),
            shift in 1u32..100,
        ) {
            let p: Vec<u32> = labels.iter().map(|x| x.0).collect();
            let q: Vec<u32> = labels.iter().map(|x| x.1).collect();
            let pq: f64 = adjusted_rand_index(&seq(&p), &seq(&q)).unwrap();
            let qp: f64 = adjusted_rand_index(&seq(&q), &seq(&p)).unwrap();
            prop_assert_eq!(pq, qp);
            let renamed: Vec<u32> = p.iter().map(|&l| (l * 7 + shift) % 1000 + 1).collect();
            let r: f64 = adjusted_rand_index(&seq(&renamed), &seq(&q)).unwrap();
            prop_assert_eq!(pq, r);
            prop_assert!((pq - ari_pairs(&p, &q)).abs() < 1e-12);
        }

        #[test]
        fn relabel_is_identity_on_unchanged(labels in proptest::collection::vec(1u32..8, 1..40), perm in 0u32..1000) {
            let prev = seq(&labels);
            let raw = seq(&labels.iter().map(|&l| l * 31 + perm).collect::<Vec<_>>());
            prop_assert_eq!(relabel_partition(&prev, &raw), prev);
        }

        #[test]
        fn beta_in_unit_interval(
            a in proptest::collection::vec((0u8..6, 0u8..6), 0..30),
            b in proptest::collection::vec((0u8..6, 0u8..6), 0..30),
        ) {
            let ids: Vec<TraderId> = (0..6).map(|k| TraderId::new(k.to_string())).collect();
            let mk = |v: &[(u8, u8)]| TraderLeadLagAdjacency::from_links(&ids, v.iter().map(|&(x, y)| (ids[x as usize].clone(), ids[y as usize].clone())));
            let (la, lb) = (mk(&a), mk(&b));
            if let Some(beta) = leadlag_overlap_beta::<f64>(&la, &lb) {
                prop_assert!((0.0..=1.0).contains(&beta));
                prop_assert_eq!(leadlag_overlap_beta::<f64>(&la, &la), Some(1.0));
            }
        }
    }
}
