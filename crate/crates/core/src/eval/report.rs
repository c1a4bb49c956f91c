use std::collections::BTreeMap;
use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::stats::{chou_chu_test, location_tests, roc_auc, ChouChuMethod, TestResult, MIN_BINARY};
use crate::error::{Error, Result};
use crate::num::Real;
use crate::predict::{DailyCovariate, ForecastRecord, TargetKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceSeries<F> {
    pub slice_end_ms: Vec<i64>,
    /// predicted sign × realized sign of the target.
    pub sign_product: Vec<i8>,
    /// predicted sign × realized net flow.
    pub flow_product: Vec<F>,
    pub cum_sign: Vec<i64>,
    pub cum_flow_product: Vec<F>,
    pub cum_flow: Vec<F>,
}

/// Per-slice products and their running sums; records whose target is
/// undefined are skipped, zero predictions contribute 0.
pub fn performance_series<F: Real>(records: &[ForecastRecord<F>], target: TargetKind) -> PerformanceSeries<F> {
    let mut s = PerformanceSeries {
        slice_end_ms: Vec::new(),
        sign_product: Vec::new(),
        flow_product: Vec::new(),
        cum_sign: Vec::new(),
        cum_flow_product: Vec::new(),
        cum_flow: Vec::new(),
    };
    let (mut a, mut b, mut c) = (0i64, F::zero(), F::zero());
    for r in records {
        let Some(real) = r.realized(target) else { continue };
        let sp = r.combined * real;
        let fp = F::lit(f64::from(r.combined)) * r.realized_flow;
        a += i64::from(sp);
        b += fp;
        c += r.realized_flow;
        s.slice_end_ms.push(r.slice_end_ms);
        s.sign_product.push(sp);
        s.flow_product.push(fp);
        s.cum_sign.push(a);
        s.cum_flow_product.push(b);
        s.cum_flow.push(c);
    }
    s
}

pub fn write_performance<F: Real, W: Write>(out: W, s: &PerformanceSeries<F>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["slice_end", "sign_product", "flow_product", "cum_sign", "cum_flow_product", "cum_flow"])?;
    for k in 0..s.slice_end_ms.len() {
        w.write_record([
            s.slice_end_ms[k].to_string(),
            s.sign_product[k].to_string(),
            s.flow_product[k].to_string(),
            s.cum_sign[k].to_string(),
            s.cum_flow_product[k].to_string(),
            s.cum_flow[k].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Hit rate of the nonzero combined predictions against a defined nonzero
/// target, and the rate expected by chance from the two marginals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub n: usize,
    pub hits: usize,
    pub accuracy: f64,
    pub base_rate: f64,
}

pub fn accuracy<F>(records: &[ForecastRecord<F>], target: TargetKind) -> Option<Accuracy> {
    let mut pred = [0usize; 3];
    let mut real = [0usize; 3];
    let mut hits = 0;
    let mut n = 0;
    for r in records {
        let Some(y) = r.realized(target) else { continue };
        if r.combined == 0 {
            continue;
        }
        n += 1;
        hits += usize::from(y == r.combined);
        pred[(r.combined + 1) as usize] += 1;
        real[(y + 1) as usize] += 1;
    }
    (n > 0).then(|| {
        let nn = (n * n) as f64;
        Accuracy {
            n,
            hits,
            accuracy: hits as f64 / n as f64,
            base_rate: (0..3).map(|c| (pred[c] * real[c]) as f64).sum::<f64>() / nn,
        }
    })
}

fn signs<F>(records: &[&ForecastRecord<F>], target: TargetKind) -> (Vec<i8>, Vec<i8>) {
    records
        .iter()
        .filter_map(|r| r.realized(target).map(|y| (r.combined, y)))
        .unzip()
}

fn lenient<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Insufficient(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourRow<F> {
    pub hour: u8,
    pub n: usize,
    pub chou_chu: Option<TestResult<F>>,
    pub t: Option<TestResult<F>>,
    pub wilcoxon: Option<TestResult<F>>,
    pub auc_r_h: Option<F>,
    pub auc_beta: Option<F>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyReport<F> {
    pub rows: Vec<HourRow<F>>,
    /// Hours left out for having fewer than the minimum observations.
    pub omitted: Vec<(u8, usize)>,
    pub mean_auc_r_h: Option<F>,
    pub mean_auc_beta: Option<F>,
}

fn daily_auc<F: Real>(records: &[&ForecastRecord<F>], target: TargetKind, covariate: &BTreeMap<NaiveDate, F>) -> Option<F> {
    let mut per_day: BTreeMap<NaiveDate, (usize, usize)> = BTreeMap::new();
    for r in records {
        let Some(y) = r.realized(target) else { continue };
        if r.combined == 0 || y == 0 {
            continue;
        }
        let e = per_day.entry(r.day).or_default();
        e.0 += usize::from(y == r.combined);
        e.1 += 1;
    }
    let (scores, success): (Vec<F>, Vec<bool>) = per_day
        .iter()
        .filter_map(|(d, &(h, n))| covariate.get(d).map(|&c| (c, 2 * h > n)))
        .unzip();
    roc_auc(&scores, &success).ok()
}

fn mean<F: Real>(v: impl Iterator<Item = Option<F>>) -> Option<F> {
    let xs: Vec<F> = v.flatten().collect();
    (!xs.is_empty()).then(|| xs.iter().copied().sum::<F>() / F::count(xs.len()))
}

/// The binary and location tests within every hour of the day holding at
/// least `min_obs` records, and per-hour AUC of the daily covariates
/// against the day's hit rate at that hour exceeding ½.
pub fn hourly_condition<F: Real>(
    records: &[ForecastRecord<F>],
    target: TargetKind,
    covariates: &[DailyCovariate<F>],
    method: ChouChuMethod,
    min_obs: usize,
) -> Result<HourlyReport<F>> {
    let mut by_hour: BTreeMap<u8, Vec<&ForecastRecord<F>>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.realized(target).is_some()) {
        by_hour.entry(r.hour).or_default().push(r);
    }
    let r_h: BTreeMap<NaiveDate, F> = covariates.iter().filter_map(|c| c.r_h.map(|v| (c.day, v))).collect();
    let beta: BTreeMap<NaiveDate, F> = covariates.iter().filter_map(|c| c.beta.map(|v| (c.day, v))).collect();
    let mut report = HourlyReport {
        rows: Vec::new(),
        omitted: Vec::new(),
        mean_auc_r_h: None,
        mean_auc_beta: None,
    };
    for (hour, rs) in by_hour {
        if rs.len() < min_obs.max(MIN_BINARY) {
            report.omitted.push((hour, rs.len()));
            continue;
        }
        let (p, y) = signs(&rs, target);
        let chou_chu = lenient(chou_chu_test(&p, &y, method))?.flatten();
        let products: Vec<F> = p.iter().zip(&y).map(|(a, b)| F::lit(f64::from(a * b))).collect();
        let (t, wilcoxon) = match lenient(location_tests(&products))? {
            Some((t, w)) => (Some(t), w),
            None => (None, None),
        };
        report.rows.push(HourRow {
            hour,
            n: rs.len(),
            chou_chu,
            t,
            wilcoxon,
            auc_r_h: daily_auc(&rs, target, &r_h),
            auc_beta: daily_auc(&rs, target, &beta),
        });
    }
    report.mean_auc_r_h = mean(report.rows.iter().map(|r| r.auc_r_h));
    report.mean_auc_beta = mean(report.rows.iter().map(|r| r.auc_beta));
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport<F> {
    pub target: TargetKind,
    pub accuracy: Option<Accuracy>,
    pub chou_chu: Option<TestResult<F>>,
    pub t: Option<TestResult<F>>,
    pub wilcoxon: Option<TestResult<F>>,
    pub hourly: HourlyReport<F>,
}

pub fn evaluate<F: Real>(
    records: &[ForecastRecord<F>],
    target: TargetKind,
    covariates: &[DailyCovariate<F>],
    method: ChouChuMethod,
) -> Result<EvalReport<F>> {
    evaluate_with(records, target, covariates, method, MIN_BINARY)
}

/// [`evaluate`] with the per-hour minimum record count given explicitly.
pub fn evaluate_with<F: Real>(
    records: &[ForecastRecord<F>],
    target: TargetKind,
    covariates: &[DailyCovariate<F>],
    method: ChouChuMethod,
    min_hour_obs: usize,
) -> Result<EvalReport<F>> {
    let all: Vec<&ForecastRecord<F>> = records.iter().collect();
    let (p, y) = signs(&all, target);
    let products: Vec<F> = p.iter().zip(&y).map(|(a, b)| F::lit(f64::from(a * b))).collect();
    let (t, wilcoxon) = match lenient(location_tests(&products))? {
        Some((t, w)) => (Some(t), w),
        None => (None, None),
    };
    Ok(EvalReport {
        target,
        accuracy: accuracy(records, target),
        chou_chu: lenient(chou_chu_test(&p, &y, method))?.flatten(),
        t,
        wilcoxon,
        hourly: hourly_condition(records, target, covariates, method, min_hour_obs)?,
    })
}
