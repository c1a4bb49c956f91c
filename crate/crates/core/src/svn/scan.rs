//! Bitset co-occurrence counting and the pairwise hypergeometric scan shared
//! by the synchronous and the lagged networks.

use rayon::prelude::*;

use super::hypergeom::hypergeom_sf;
use crate::ingest::State;
use crate::num::Real;

/// One bitset per active state over a fixed set of positions.
#[derive(Debug, Clone)]
pub(crate) struct StateBits {
    bits: [Vec<u64>; 3],
    counts: [u64; 3],
}

impl StateBits {
    pub fn new(states: impl IntoIterator<Item = State>, len: usize) -> Self {
        let words = len.div_ceil(64);
        let mut bits = [vec![0u64; words], vec![0u64; words], vec![0u64; words]];
        let mut counts = [0u64; 3];
        for (pos, s) in states.into_iter().enumerate() {
            if let Some(k) = s.active_index() {
                bits[k][pos / 64] |= 1 << (pos % 64);
                counts[k] += 1;
            }
        }
        StateBits { bits, counts }
    }

    pub fn count(&self, s: usize) -> u64 {
        self.counts[s]
    }

    pub fn co_count(&self, s: usize, other: &StateBits, s2: usize) -> u64 {
        self.bits[s]
            .iter()
            .zip(&other.bits[s2])
            .map(|(a, b)| u64::from((a & b).count_ones()))
            .sum()
    }
}

/// A test whose p-value did not exceed the scan cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Hit<F> {
    pub i: usize,
    pub j: usize,
    pub si: usize,
    pub sj: usize,
    pub x: u64,
    pub ni: u64,
    pub nj: u64,
    pub p: F,
}

/// Test every pair (i < j, or every ordered pair including i = j when
/// `ordered`) and all nine state combinations over `t` positions.
///
/// Returns the hits with p ≤ `cutoff`, ordered by (i, j, si, sj), and the
/// number of testable hypotheses (both marginal counts positive).
pub(crate) fn scan<F: Real>(lead: &[StateBits], follow: &[StateBits], t: u64, cutoff: F, ordered: bool) -> (Vec<Hit<F>>, u64) {
    let skip_below_mean = cutoff < F::lit(0.5);
    let per_row: Vec<(Vec<Hit<F>>, u64)> = (0..lead.len())
        .into_par_iter()
        .map(|i| {
            let mut hits = Vec::new();
            let mut tested = 0u64;
            let first = if ordered { 0 } else { i + 1 };
            for j in first..follow.len() {
                for si in 0..3 {
                    let ni = lead[i].count(si);
                    if ni == 0 {
                        continue;
                    }
                    for sj in 0..3 {
                        let nj = follow[j].count(sj);
                        if nj == 0 {
                            continue;
                        }
                        tested += 1;
                        let x = lead[i].co_count(si, &follow[j], sj);
                        // at or below the mean the upper tail holds at least half the mass
                        if skip_below_mean && x * t <= ni * nj {
                            continue;
                        }
                        let p = hypergeom_sf::<F>(t, ni, nj, x).expect("counts within population");
                        if p <= cutoff {
                            hits.push(Hit { i, j, si, sj, x, ni, nj, p });
                        }
                    }
                }
            }
            (hits, tested)
        })
        .collect();
    let tested = per_row.iter().map(|(_, n)| n).sum();
    (per_row.into_iter().flat_map(|(h, _)| h).collect(), tested)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_from_below_mean_is_at_least_half() {
        for t in 1..=60u64 {
            for a in 0..=t {
                for b in 0..=t {
                    for x in 0..=a.min(b) {
                        if x * t <= a * b {
                            let p: f64 = hypergeom_sf(t, a, b, x).unwrap();
                            assert!(p >= 0.5 - 1e-12, "T={t} a={a} b={b} x={x}: {p}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn co_counts_ignore_inactive() {
        use State::*;
        let a = StateBits::new([Buy, Inactive, Buy], 3);
        let b = StateBits::new([Buy, Buy, Inactive], 3);
        assert_eq!((a.co_count(1, &b, 1), a.count(1), b.count(1)), (1, 2, 2));
    }
}
