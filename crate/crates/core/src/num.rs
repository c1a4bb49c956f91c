//! Scalar abstraction shared by every numeric kernel in the crate.
//!
//! All volume, probability and codelength arithmetic is written against
//! [`Real`], implemented for `f32` and `f64`. Combinatorial quantities that
//! must be exact (contingency tables, overlaps) stay in integer arithmetic and
//! are converted once at the end.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    'static
    + Send
    + Sync
    + Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Lossy conversion from a count.
    #[inline]
    fn count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `p * log2(p)`, with the `0 log 0 = 0` convention.
#[inline]
pub fn plogp<F: Real>(p: F) -> F {
    if p > F::zero() {
        p * p.log2()
    } else {
        F::zero()
    }
}

/// `ln(k!)`.
///
/// Exact products up to 20! (the largest factorial that fits in a `u64`),
/// Stirling series with six correction terms beyond; the truncation error of
/// the series at k = 21 is below 1e-18.
pub fn ln_factorial<F: Real>(k: u64) -> F {
    if k <= 20 {
        let mut acc: u64 = 1;
        for j in 2..=k {
            acc *= j;
        }
        return F::from_u64(acc).expect("u64 representable").ln();
    }
    let x = k as f64;
    let x2 = x * x;
    let series = 1.0 / (12.0 * x) - 1.0 / (360.0 * x * x2) + 1.0 / (1260.0 * x * x2 * x2)
        - 1.0 / (1680.0 * x * x2 * x2 * x2)
        + 1.0 / (1188.0 * x * x2 * x2 * x2 * x2)
        - 691.0 / (360_360.0 * x * x2 * x2 * x2 * x2 * x2);
    let half_ln_two_pi = 0.918_938_533_204_672_8_f64;
    F::lit(x * x.ln() - x + 0.5 * x.ln() + half_ln_two_pi + series)
}

/// `ln C(n, k)`.
#[inline]
pub fn ln_binomial<F: Real>(n: u64, k: u64) -> F {
    debug_assert!(k <= n);
    ln_factorial::<F>(n) - ln_factorial::<F>(k) - ln_factorial::<F>(n - k)
}

/// Sign of a real as `-1`, `0` or `+1`.
#[inline]
pub fn sign_of<F: Real>(x: F) -> i8 {
    if x > F::zero() {
        1
    } else if x < F::zero() {
        -1
    } else {
        0
    }
}
