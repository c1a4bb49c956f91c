//! L2-penalised logistic regression on one-hot encoded categorical columns,
//! fitted by iteratively reweighted least squares.

use serde::{Deserialize, Serialize};

use super::matrix::{check_targets, PredictorMatrix};
use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    /// Penalty on every coefficient but the intercept, on the summed
    /// log-likelihood.
    pub lambda: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            lambda: 1e-4,
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel<F> {
    pub columns: Vec<String>,
    /// Training levels per column; the first one is the reference.
    pub levels: Vec<Vec<i8>>,
    /// Intercept followed by one coefficient per non-reference level.
    pub coef: Vec<F>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the fitted rows had a single class.
    pub degenerate: Option<i8>,
}

struct Design<F> {
    p: usize,
    rows: Vec<Vec<usize>>,
    _f: std::marker::PhantomData<F>,
}

fn dummies(levels: &[Vec<i8>], row: &[i8], offset: &[usize]) -> Vec<usize> {
    let mut active = vec![0];
    for (c, &v) in row.iter().enumerate() {
        if let Ok(k) = levels[c].binary_search(&v) {
            if k > 0 {
                active.push(offset[c] + k - 1);
            }
        }
    }
    active
}

impl<F: Real> Design<F> {
    fn new(levels: &[Vec<i8>], x: &PredictorMatrix, rows: &[usize]) -> Self {
        let mut offset = Vec::with_capacity(levels.len());
        let mut p = 1;
        for l in levels {
            offset.push(p);
            p += l.len().saturating_sub(1);
        }
        let rows = rows.iter().map(|&r| dummies(levels, x.row(r), &offset)).collect();
        Design {
            p,
            rows,
            _f: std::marker::PhantomData,
        }
    }

    fn eta(&self, beta: &[F], r: usize) -> F {
        self.rows[r].iter().map(|&j| beta[j]).sum()
    }
}

fn softplus<F: Real>(x: F) -> F {
    if x > F::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Penalised negative log-likelihood.
fn objective<F: Real>(d: &Design<F>, y: &[F], beta: &[F], lambda: F) -> F {
    let mut j = F::zero();
    for (r, &t) in y.iter().enumerate() {
        let e = d.eta(beta, r);
        j += softplus(e) - t * e;
    }
    j + F::lit(0.5) * lambda * beta[1..].iter().map(|&b| b * b).sum::<F>()
}

fn gradient<F: Real>(d: &Design<F>, y: &[F], beta: &[F], lambda: F) -> Vec<F> {
    let mut g = vec![F::zero(); d.p];
    for (r, &t) in y.iter().enumerate() {
        let resid = sigmoid(d.eta(beta, r)) - t;
        for &j in &d.rows[r] {
            g[j] += resid;
        }
    }
    for j in 1..d.p {
        g[j] += lambda * beta[j];
    }
    g
}

/// Solve `a x = b` for symmetric positive definite `a` (row-major, n × n).
pub fn cholesky_solve<F: Real>(a: &[F], b: &[F]) -> Option<Vec<F>> {
    let n = b.len();
    let mut l = vec![F::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > F::zero()) {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut z = vec![F::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * z[k];
        }
        z[i] = s / l[i * n + i];
    }
    let mut x = vec![F::zero(); n];
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}

/// Fit on the rows whose target is ±1; rows with target 0 are ignored.
pub fn train_logistic<F: Real>(x: &PredictorMatrix, y: &[i8], cfg: &LogisticConfig) -> Result<LogisticModel<F>> {
    check_targets(x, y)?;
    let keep: Vec<usize> = (0..y.len()).filter(|&r| y[r] != 0).collect();
    if keep.is_empty() {
        return Err(Error::Insufficient("no rows with target ±1".into()));
    }
    let fit_x = x.select(&keep);
    let levels: Vec<Vec<i8>> = (0..x.n_cols()).map(|c| fit_x.levels(c)).collect();
    let mut model = LogisticModel {
        columns: x.columns.clone(),
        levels,
        coef: Vec::new(),
        iterations: 0,
        converged: true,
        degenerate: None,
    };
    let first = y[keep[0]];
    if keep.iter().all(|&r| y[r] == first) {
        model.degenerate = Some(first);
        return Ok(model);
    }

    let rows: Vec<usize> = (0..keep.len()).collect();
    let d: Design<F> = Design::new(&model.levels, &fit_x, &rows);
    let t: Vec<F> = keep.iter().map(|&r| if y[r] > 0 { F::one() } else { F::zero() }).collect();
    let lambda = F::lit(cfg.lambda);
    let tol = F::lit(cfg.tol);
    let p = d.p;
    let mut beta = vec![F::zero(); p];
    let mut current = objective(&d, &t, &beta, lambda);
    model.converged = false;

    for it in 0..cfg.max_iter {
        model.iterations = it + 1;
        let g = gradient(&d, &t, &beta, lambda);
        let mut h = vec![F::zero(); p * p];
        for (r, act) in d.rows.iter().enumerate() {
            let pr = sigmoid(d.eta(&beta, r));
            let w = pr * (F::one() - pr);
            for &a in act {
                for &b in act {
                    h[a * p + b] += w;
                }
            }
        }
        for j in 1..p {
            h[j * p + j] += lambda;
        }
        let step = match cholesky_solve(&h, &g) {
            Some(s) => s,
            None => {
                // flat curvature; a small ridge keeps the system solvable
                for j in 0..p {
                    h[j * p + j] += F::lit(1e-8);
                }
                cholesky_solve(&h, &g).ok_or_else(|| Error::Domain("logistic Hessian not positive definite".into()))?
            }
        };
        let mut scale = F::one();
        let mut next: Vec<F>;
        let mut value;
        loop {
            next = beta.iter().zip(&step).map(|(&b, &s)| b - scale * s).collect();
            value = objective(&d, &t, &next, lambda);
            if value <= current || scale < F::lit(1e-10) {
                break;
            }
            scale *= F::lit(0.5);
        }
        let moved = step.iter().map(|&s| (scale * s).abs()).fold(F::zero(), F::max);
        beta = next;
        let improvement = current - value;
        current = value;
        if moved < tol || improvement.abs() < tol * (F::one() + current.abs()) * F::lit(1e-4) {
            model.converged = true;
            break;
        }
    }
    model.coef = beta;
    Ok(model)
}

impl<F: Real> LogisticModel<F> {
    /// P(target = +1 | row).
    pub fn probability(&self, row: &[i8]) -> Result<F> {
        if row.len() != self.columns.len() {
            return Err(Error::Schema {
                expected: self.columns.len(),
                got: row.len(),
            });
        }
        if let Some(c) = self.degenerate {
            return Ok(if c > 0 { F::one() } else { F::zero() });
        }
        let mut offset = Vec::with_capacity(self.levels.len());
        let mut p = 1;
        for l in &self.levels {
            offset.push(p);
            p += l.len().saturating_sub(1);
        }
        let eta: F = dummies(&self.levels, row, &offset).iter().map(|&j| self.coef[j]).sum();
        Ok(sigmoid(eta))
    }

    /// +1 when the probability is at least ½, otherwise −1.
    pub fn predict(&self, row: &[i8]) -> Result<i8> {
        Ok(if self.probability(row)? >= F::lit(0.5) { 1 } else { -1 })
    }

    /// Gradient of the penalised objective at the fitted coefficients.
    pub fn gradient_norm(&self, x: &PredictorMatrix, y: &[i8], cfg: &LogisticConfig) -> F {
        if self.degenerate.is_some() {
            return F::zero();
        }
        let keep: Vec<usize> = (0..y.len()).filter(|&r| y[r] != 0).collect();
        let fit_x = x.select(&keep);
        let rows: Vec<usize> = (0..keep.len()).collect();
        let d: Design<F> = Design::new(&self.levels, &fit_x, &rows);
        let t: Vec<F> = keep.iter().map(|&r| if y[r] > 0 { F::one() } else { F::zero() }).collect();
        gradient(&d, &t, &self.coef, F::lit(cfg.lambda)).iter().map(|&g| g * g).sum::<F>().sqrt()
    }
}
