use crate::error::{Error, Result};
use crate::num::{ln_binomial, Real};

/// Relative size below which further tail terms are dropped.
const TRUNCATE: f64 = 1e-18;

fn ln_pmf<F: Real>(t: u64, a: u64, b: u64, k: u64) -> F {
    ln_binomial::<F>(a, k) + ln_binomial::<F>(t - a, b - k) - ln_binomial::<F>(t, b)
}

/// P(X ≥ x) for X hypergeometric: population `t`, `a` marked items, `b`
/// draws. Equivalently the chance that two random subsets of sizes `a` and
/// `b` of `t` slices overlap in at least `x` slices.
///
/// The pmf at the starting point is taken in log space; the rest of the tail
/// follows from the term ratio, so only one log-factorial evaluation is done
/// per call. The result is clamped to `[F::min_positive_value(), 1]`.
pub fn hypergeom_sf<F: Real>(t: u64, a: u64, b: u64, x: u64) -> Result<F> {
    if a > t || b > t || x > a.min(b) {
        return Err(Error::Domain(format!("hypergeom_sf(T={t}, n_i={a}, n_j={b}, x={x})")));
    }
    let lo = (a + b).saturating_sub(t);
    if x <= lo {
        return Ok(F::one());
    }
    let hi = a.min(b);
    let mode = ((a + 1) as u128 * (b + 1) as u128 / (t + 2) as u128) as u64;

    let p = if x > mode {
        upper_sum::<F>(t, a, b, x, hi)
    } else {
        // lower tail below x is the smaller side
        let lower = lower_sum::<F>(t, a, b, x - 1, lo);
        if lower < F::lit(0.5) {
            F::one() - lower
        } else {
            upper_sum::<F>(t, a, b, x, hi)
        }
    };
    Ok(p.max(F::min_positive_value()).min(F::one()))
}

/// Σ_{k=x}^{hi} pmf(k), walking upward from x.
fn upper_sum<F: Real>(t: u64, a: u64, b: u64, x: u64, hi: u64) -> F {
    let eps = F::lit(TRUNCATE);
    let mut term = F::one();
    let mut sum = F::one();
    let mut peaked = false;
    for k in x..hi {
        let num = F::from_u64((a - k) * (b - k)).unwrap();
        let den = F::from_u64((k + 1) * (t + k + 1 - a - b)).unwrap();
        let next = term * num / den;
        peaked |= next < term;
        term = next;
        sum += term;
        if peaked && term < eps * sum {
            break;
        }
    }
    sum * ln_pmf::<F>(t, a, b, x).exp()
}

/// Σ_{k=lo}^{top} pmf(k), walking downward from top.
fn lower_sum<F: Real>(t: u64, a: u64, b: u64, top: u64, lo: u64) -> F {
    let eps = F::lit(TRUNCATE);
    let mut term = F::one();
    let mut sum = F::one();
    let mut k = top;
    while k > lo {
        // pmf(k-1)/pmf(k)
        let num = F::from_u64(k * (t + k - a - b)).unwrap();
        let den = F::from_u64((a - k + 1) * (b - k + 1)).unwrap();
        term = term * num / den;
        sum += term;
        k -= 1;
        if term < eps * sum {
            break;
        }
    }
    sum * ln_pmf::<F>(t, a, b, top).exp()
}
