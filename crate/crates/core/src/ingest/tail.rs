//! Power-law tail fit of per-trader activity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Minimum number of counts accepted by [`fit_tail_exponent`].
pub const MIN_COUNTS: usize = 1000;
/// Minimum number of samples at or above the fitted cutoff.
pub const MIN_TAIL: usize = 50;
/// Above this many distinct values the continuous estimator is used.
pub const CONTINUOUS_ABOVE: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit<F> {
    pub alpha: F,
    pub x_min: u64,
    pub n_tail: usize,
    /// KS distance between the tail and the fitted law.
    pub ks: F,
    pub ci_low: F,
    pub ci_high: F,
    /// True when the continuous approximation was used.
    pub continuous: bool,
}

/// Hurwitz zeta ζ(s, q) = Σ_{k≥0} (q + k)^{-s} for s > 1, q > 0, by
/// Euler–Maclaurin summation after a short direct head.
pub fn hurwitz_zeta<F: Real>(s: F, q: F) -> F {
    const HEAD: usize = 12;
    // B_{2j} / (2j)!
    const B: [f64; 6] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30_240.0,
        -1.0 / 1_209_600.0,
        1.0 / 47_900_160.0,
        -691.0 / 1_307_674_368_000.0,
    ];
    let mut sum = F::zero();
    for k in 0..HEAD {
        sum += (q + F::count(k)).powf(-s);
    }
    let a = q + F::count(HEAD);
    sum += a.powf(F::one() - s) / (s - F::one()) + F::lit(0.5) * a.powf(-s);
    // rising factorial s (s+1) ... (s+2j-2) times a^{-s-2j+1}
    let mut rising = s;
    let mut power = a.powf(-s - F::one());
    let inv_a2 = (a * a).recip();
    for (j, b) in B.iter().enumerate() {
        sum += F::lit(*b) * rising * power;
        let m = F::count(2 * j + 1);
        rising = rising * (s + m) * (s + m + F::one());
        power *= inv_a2;
    }
    sum
}

/// Clauset-style discrete power-law fit P(n) ∝ n^{-α} for n ≥ x_min.
///
/// α is the approximate discrete MLE `1 + n / Σ ln(x / (x_min - ½))`, x_min
/// the candidate minimising the KS distance to the Hurwitz-zeta tail, and the
/// interval is α ± 1.96 (α - 1)/√n.
pub fn fit_tail_exponent<F: Real>(counts: &[u64]) -> Result<TailFit<F>> {
    if counts.len() < MIN_COUNTS {
        return Err(Error::TailFitRefused(format!(
            "{} counts supplied, at least {MIN_COUNTS} needed",
            counts.len()
        )));
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::TailFitRefused("counts must be positive".into()));
    }
    let mut xs = counts.to_vec();
    xs.sort_unstable();
    if xs[0] == xs[xs.len() - 1] {
        return Err(Error::TailFitRefused(format!("all counts equal {}", xs[0])));
    }

    // distinct values with their multiplicities
    let mut distinct: Vec<(u64, usize)> = Vec::new();
    for &x in &xs {
        match distinct.last_mut() {
            Some((v, c)) if *v == x => *c += 1,
            _ => distinct.push((x, 1)),
        }
    }
    let continuous = distinct.len() > CONTINUOUS_ABOVE;

    // suffix sums of ln x and sample counts over distinct values
    let n_distinct = distinct.len();
    let mut tail_n = vec![0usize; n_distinct + 1];
    let mut tail_ln = vec![F::zero(); n_distinct + 1];
    for k in (0..n_distinct).rev() {
        let (x, c) = distinct[k];
        tail_n[k] = tail_n[k + 1] + c;
        tail_ln[k] = tail_ln[k + 1] + F::count(c) * F::from_u64(x).unwrap().ln();
    }

    let mut best: Option<(F, usize, F)> = None;
    for k in 0..n_distinct {
        let n = tail_n[k];
        // the last candidate must leave at least two distinct values
        if n < MIN_TAIL || k + 1 >= n_distinct {
            break;
        }
        let x_min = distinct[k].0;
        let nf = F::count(n);
        let shift = if continuous {
            F::from_u64(x_min).unwrap()
        } else {
            F::from_u64(x_min).unwrap() - F::lit(0.5)
        };
        let denom = tail_ln[k] - nf * shift.ln();
        if denom <= F::zero() {
            continue;
        }
        let alpha = F::one() + nf / denom;
        let ks = if continuous {
            ks_continuous(&distinct[k..], n, alpha)
        } else {
            ks_discrete(&distinct[k..], n, alpha)
        };
        if best.map_or(true, |(d, _, _)| ks < d) {
            best = Some((ks, k, alpha));
        }
    }

    let (ks, k, alpha) = best.ok_or_else(|| {
        Error::TailFitRefused(format!("no cutoff leaves {MIN_TAIL} samples over at least two distinct values"))
    })?;
    let n_tail = tail_n[k];
    let se = (alpha - F::one()) / F::count(n_tail).sqrt();
    Ok(TailFit {
        alpha,
        x_min: distinct[k].0,
        n_tail,
        ks,
        ci_low: alpha - F::lit(1.96) * se,
        ci_high: alpha + F::lit(1.96) * se,
        continuous,
    })
}

/// max_x |S_emp(x) - S_fit(x)| with S(x) = P(X ≥ x), evaluated at every
/// distinct tail value (the step points of both survival functions).
fn ks_discrete<F: Real>(tail: &[(u64, usize)], n: usize, alpha: F) -> F {
    const STEP_LIMIT: u64 = 64;
    let x0 = tail[0].0;
    let norm = hurwitz_zeta(alpha, F::from_u64(x0).unwrap());
    let nf = F::count(n);
    let mut zeta = norm;
    let mut at = x0;
    let mut above = n;
    let mut d = F::zero();
    for &(x, c) in tail {
        if x != at {
            if x - at <= STEP_LIMIT {
                for y in at..x {
                    zeta -= F::from_u64(y).unwrap().powf(-alpha);
                }
            } else {
                zeta = hurwitz_zeta(alpha, F::from_u64(x).unwrap());
            }
            at = x;
        }
        let emp = F::count(above) / nf;
        d = d.max((emp - zeta / norm).abs());
        above -= c;
    }
    d
}

fn ks_continuous<F: Real>(tail: &[(u64, usize)], n: usize, alpha: F) -> F {
    let x0 = F::from_u64(tail[0].0).unwrap();
    let nf = F::count(n);
    let mut above = n;
    let mut d = F::zero();
    for &(x, c) in tail {
        let model = (F::from_u64(x).unwrap() / x0).powf(F::one() - alpha);
        d = d.max((F::count(above) / nf - model).abs());
        above -= c;
        d = d.max((F::count(above) / nf - model).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    /// Inverse-CDF sampler for the discrete power law with x_min = 1, using
    /// the rounded continuous approximation.
    fn pareto_counts(alpha: f64, n: usize, seed: u64) -> Vec<u64> {
        let mut rng = seed::rng(seed, &[]);
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                ((0.5 * (1.0 - u).powf(-1.0 / (alpha - 1.0)) + 0.5).floor() as u64).max(1)
            })
            .collect()
    }

    #[test]
    fn zeta_matches_riemann_values() {
        let z2: f64 = hurwitz_zeta(2.0, 1.0);
        assert!((z2 - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-14);
        let z4: f64 = hurwitz_zeta(4.0, 1.0);
        assert!((z4 - std::f64::consts::PI.powi(4) / 90.0).abs() < 1e-14);
        // ζ(s, q) - ζ(s, q + 1) = q^{-s}
        let s = 2.37;
        let a: f64 = hurwitz_zeta(s, 3.5);
        let b: f64 = hurwitz_zeta(s, 4.5);
        assert!((a - b - 3.5f64.powf(-s)).abs() < 1e-14);
    }

    #[test]
    fn zeta_matches_brute_force_sum() {
        for &s in &[1.5f64, 2.0, 3.1] {
            for &q in &[1.0, 7.0, 250.0] {
                // direct sum to K plus integral tail bound
                let k = 2_000_000u64;
                let direct: f64 = (0..k).map(|j| (q + j as f64).powf(-s)).sum::<f64>()
                    + (q + k as f64 - 0.5).powf(1.0 - s) / (s - 1.0);
                let got: f64 = hurwitz_zeta(s, q);
                assert!((got - direct).abs() < 1e-9 * got, "s={s} q={q}: {got} vs {direct}");
            }
        }
    }

    #[test]
    fn pareto_two_is_recovered() {
        for s in 0..20 {
            let fit = fit_tail_exponent::<f64>(&pareto_counts(2.0, 10_000, s)).unwrap();
            assert!((1.9..=2.1).contains(&fit.alpha), "seed {s}: {fit:?}");
            assert!(fit.n_tail >= MIN_TAIL);
            assert!(fit.ci_low < fit.alpha && fit.alpha < fit.ci_high);
        }
    }

    #[test]
    fn recovery_within_three_standard_errors() {
        let mut hits = 0;
        for s in 0..100 {
            let fit = fit_tail_exponent::<f64>(&pareto_counts(2.5, 5_000, 1000 + s)).unwrap();
            let se = (fit.alpha - 1.0) / (fit.n_tail as f64).sqrt();
            if (fit.alpha - 2.5).abs() <= 3.0 * se {
                hits += 1;
            }
        }
        assert!(hits >= 95, "{hits}/100");
    }

    #[test]
    fn all_equal_refused() {
        assert!(matches!(fit_tail_exponent::<f64>(&vec![7; 2000]), Err(Error::TailFitRefused(_))));
    }

    #[test]
    fn too_few_refused() {
        assert!(matches!(fit_tail_exponent::<f64>(&pareto_counts(2.0, 999, 1)), Err(Error::TailFitRefused(_))));
    }

    #[test]
    fn f32_fit() {
        let fit = fit_tail_exponent::<f32>(&pareto_counts(2.0, 10_000, 3)).unwrap();
        assert!((1.85..=2.15).contains(&fit.alpha), "{fit:?}");
    }
}
