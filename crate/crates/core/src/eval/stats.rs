use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::num::Real;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult<F> {
    pub statistic: F,
    pub p_value: F,
    pub n: usize,
    pub method: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ChouChuMethod {
    /// Circular block permutation of the predictions, block length ⌈n^⅓⌉.
    BlockPermutation { permutations: usize, seed: u64 },
    /// Asymptotic test on the sign covariance with a Newey–West variance.
    Hac,
}

impl Default for ChouChuMethod {
    fn default() -> Self {
        ChouChuMethod::BlockPermutation {
            permutations: 10_000,
            seed: 0,
        }
    }
}

pub const MIN_BINARY: usize = 30;
pub const MIN_LOCATION: usize = 10;

fn std_normal_sf(z: f64) -> f64 {
    Normal::standard().sf(z)
}

/// Does `predicted` carry information on the sign of `realized`? One-sided:
/// small p means agreement above chance. Slices where either side is 0 are
/// dropped. `Ok(None)` when the realized signs are constant.
pub fn chou_chu_test<F: Real>(predicted: &[i8], realized: &[i8], method: ChouChuMethod) -> Result<Option<TestResult<F>>> {
    if predicted.len() != realized.len() {
        return Err(Error::Schema {
            expected: predicted.len(),
            got: realized.len(),
        });
    }
    let (a, b): (Vec<i8>, Vec<i8>) = predicted
        .iter()
        .zip(realized)
        .filter(|(p, r)| **p != 0 && **r != 0)
        .map(|(p, r)| (p.signum(), r.signum()))
        .unzip();
    let n = a.len();
    if n < MIN_BINARY {
        return Err(Error::Insufficient(format!("{n} binary pairs, need {MIN_BINARY}")));
    }
    if b.iter().all(|&v| v == b[0]) {
        return Ok(None);
    }
    Ok(Some(match method {
        ChouChuMethod::BlockPermutation { permutations, seed } => block_permutation(&a, &b, permutations, seed),
        ChouChuMethod::Hac => hac(&a, &b),
    }))
}

fn agreement(a: &[i8], b: &[i8]) -> i64 {
    a.iter().zip(b).map(|(&x, &y)| i64::from(x * y)).sum()
}

fn block_permutation<F: Real>(a: &[i8], b: &[i8], permutations: usize, s: u64) -> TestResult<F> {
    let n = a.len();
    let observed = agreement(a, b);
    let len = (n as f64).cbrt().ceil() as usize;
    let mut rng = seed::rng(s, &[n as u64]);
    let mut shuffled = vec![0i8; n];
    let mut order: Vec<usize> = (0..n.div_ceil(len)).collect();
    let (mut above, mut tied) = (0usize, 0usize);
    for _ in 0..permutations {
        let shift = rng.random_range(0..n);
        order.shuffle(&mut rng);
        let mut k = 0;
        for &blk in &order {
            for i in blk * len..((blk + 1) * len).min(n) {
                shuffled[k] = a[(i + shift) % n];
                k += 1;
            }
        }
        match agreement(&shuffled, b).cmp(&observed) {
            std::cmp::Ordering::Greater => above += 1,
            std::cmp::Ordering::Equal => tied += 1,
            std::cmp::Ordering::Less => {}
        }
    }
    // The statistic is a lattice; splitting ties at random (the observed
    // value counts as one of them) keeps the null p-value uniform.
    let u: f64 = 1.0 - rng.random::<f64>();
    TestResult {
        statistic: F::lit(observed as f64 / n as f64),
        p_value: F::lit((above as f64 + u * (tied + 1) as f64) / (1 + permutations) as f64),
        n,
        method: "block_permutation".into(),
    }
}

fn hac<F: Real>(a: &[i8], b: &[i8]) -> TestResult<F> {
    let n = a.len();
    let nf = n as f64;
    let ma = a.iter().map(|&x| f64::from(x)).sum::<f64>() / nf;
    let mb = b.iter().map(|&x| f64::from(x)).sum::<f64>() / nf;
    let d: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| (f64::from(x) - ma) * (f64::from(y) - mb)).collect();
    let mean = d.iter().sum::<f64>() / nf;
    let lags = (4.0 * (nf / 100.0).powf(2.0 / 9.0)).floor() as usize;
    let gamma = |l: usize| (l..n).map(|t| (d[t] - mean) * (d[t - l] - mean)).sum::<f64>() / nf;
    let mut lrv = gamma(0);
    for l in 1..=lags.min(n - 1) {
        lrv += 2.0 * (1.0 - l as f64 / (lags as f64 + 1.0)) * gamma(l);
    }
    let (z, p) = if lrv > 0.0 {
        let z = mean / (lrv / nf).sqrt();
        (z, std_normal_sf(z))
    } else {
        (0.0, 1.0)
    };
    TestResult {
        statistic: F::lit(z),
        p_value: F::lit(p.clamp(0.0, 1.0)),
        n,
        method: "hac".into(),
    }
}

/// One-sided t test and Wilcoxon signed-rank test of "centre > 0". The
/// Wilcoxon result is `None` when every value is zero.
pub fn location_tests<F: Real>(values: &[F]) -> Result<(TestResult<F>, Option<TestResult<F>>)> {
    let n = values.len();
    if n < MIN_LOCATION {
        return Err(Error::Insufficient(format!("{n} values, need {MIN_LOCATION}")));
    }
    let x: Vec<f64> = values.iter().map(|v| v.to_f64_lossy()).collect();
    Ok((t_test(&x), wilcoxon(&x)))
}

fn t_test<F: Real>(x: &[f64]) -> TestResult<F> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let (t, p) = if var > 0.0 {
        let t = mean / (var / n).sqrt();
        let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("n ≥ 2");
        (t, dist.sf(t))
    } else if mean > 0.0 {
        (f64::INFINITY, 0.0)
    } else if mean < 0.0 {
        (f64::NEG_INFINITY, 1.0)
    } else {
        (0.0, 1.0)
    };
    TestResult {
        statistic: F::lit(t),
        p_value: F::lit(p.clamp(0.0, 1.0)),
        n: x.len(),
        method: "t".into(),
    }
}

/// Midranks (1-based) of `v`, ties sharing the average rank.
pub fn midranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub const WILCOXON_EXACT_MAX: usize = 50;

fn wilcoxon<F: Real>(x: &[f64]) -> Option<TestResult<F>> {
    let nz: Vec<f64> = x.iter().copied().filter(|&v| v != 0.0).collect();
    let n = nz.len();
    if n == 0 {
        return None;
    }
    let abs: Vec<f64> = nz.iter().map(|v| v.abs()).collect();
    let ranks = midranks(&abs);
    let w: f64 = nz.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let (p, method) = if n <= WILCOXON_EXACT_MAX {
        // doubled midranks are integers; count sign assignments by sum
        let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        let mut ways = vec![0f64; total + 1];
        ways[0] = 1.0;
        let mut reach = 0;
        for &r in &doubled {
            for s in (0..=reach).rev() {
                if ways[s] > 0.0 {
                    ways[s + r] += ways[s];
                }
            }
            reach += r;
        }
        let obs = (2.0 * w).round() as usize;
        let tail: f64 = ways[obs..].iter().sum();
        (tail / 2f64.powi(n as i32), "wilcoxon_exact")
    } else {
        let nf = n as f64;
        let mut ties = 0.0;
        let mut sorted = abs.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < n {
            let j = i + sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
            let t = (j - i) as f64;
            ties += t * t * t - t;
            i = j;
        }
        let mu = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - ties / 48.0;
        let p = if var > 0.0 { std_normal_sf((w - mu - 0.5) / var.sqrt()) } else { 0.5 };
        (p, "wilcoxon_normal")
    };
    Some(TestResult {
        statistic: F::lit(w),
        p_value: F::lit(p.clamp(0.0, 1.0)),
        n,
        method: method.into(),
    })
}

/// Probability that a random positive outranks a random negative, ties
/// counting one half.
pub fn roc_auc<F: Real>(scores: &[F], outcomes: &[bool]) -> Result<F> {
    if scores.len() != outcomes.len() {
        return Err(Error::Schema {
            expected: scores.len(),
            got: outcomes.len(),
        });
    }
    let n1 = outcomes.iter().filter(|&&o| o).count();
    let n0 = outcomes.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::Insufficient("AUC needs both outcome classes".into()));
    }
    let s: Vec<f64> = scores.iter().map(|v| v.to_f64_lossy()).collect();
    let ranks = midranks(&s);
    let r1: f64 = ranks.iter().zip(outcomes).filter(|(_, &o)| o).map(|(r, _)| r).sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    Ok(F::lit(u / (n1 as f64 * n0 as f64)))
}
