use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::num::Real;

/// Target false discovery rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdrConfig {
    pub p0: f64,
}

impl Default for FdrConfig {
    fn default() -> Self {
        FdrConfig { p0: 0.05 }
    }
}

impl FdrConfig {
    pub fn new(p0: f64) -> Result<Self> {
        let c = FdrConfig { p0 };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return Err(invalid("p0", format!("must lie in (0, 1), got {}", self.p0)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdrOutcome<F> {
    /// Largest rejected p-value; zero when nothing is rejected.
    pub threshold: F,
    pub rejected: Vec<bool>,
}

impl<F> FdrOutcome<F> {
    pub fn n_rejected(&self) -> usize {
        self.rejected.iter().filter(|&&r| r).count()
    }
}

/// Benjamini–Hochberg step-up procedure with `m = p_values.len()`.
pub fn bh_fdr<F: Real>(p_values: &[F], p0: F) -> FdrOutcome<F> {
    let mut sorted: Vec<F> = p_values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("p-values are not NaN"));
    let threshold = bh_threshold(&sorted, p_values.len() as u64, p0);
    FdrOutcome {
        threshold,
        rejected: p_values.iter().map(|&p| threshold > F::zero() && p <= threshold).collect(),
    }
}

/// BH threshold p_(k*) with k* = max{k : p_(k) ≤ k·p0/m}.
///
/// `sorted` holds the smallest p-values of a family of `m` hypotheses in
/// ascending order; hypotheses left out must all have p > p0, which cannot
/// change the outcome. Returns zero when no k qualifies.
pub fn bh_threshold<F: Real>(sorted: &[F], m: u64, p0: F) -> F {
    debug_assert!(sorted.len() as u64 <= m);
    let mf = F::from_u64(m).unwrap();
    let mut threshold = F::zero();
    for (k, &p) in sorted.iter().enumerate() {
        // p ≤ k p0 / m, cross-multiplied
        if p * mf <= F::count(k + 1) * p0 {
            threshold = p;
        }
    }
    threshold
}
