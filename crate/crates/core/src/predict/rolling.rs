use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{build_predictors, changes, flow_sign_targets, vwap_series, HOUR_COLUMN};
use crate::community::{detect_communities_with, project_weighted, GroupPartition, DEFAULT_RESTARTS};
use crate::error::{invalid, Error, Result};
use crate::ingest::{classify_states, filter_active, validate_rho0, State, StateMatrix, TimeGrid, TradeRecord, TraderSliceState};
use crate::leadlag::{aggregate_groups, build_leadlag, expand_trader_leadlag, GroupStateSeries, GroupStates, TraderLeadLagAdjacency};
use crate::learn::{adjusted_rank_ratio, forest_predict, permutation_importance, train_forest, ForestConfig, ForestModel};
use crate::num::Real;
use crate::seed;
use crate::stability::leadlag_overlap_beta;
use crate::svn::{build_svn, FdrConfig};

/// Window lengths in trading days and how often models are refitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationSchedule {
    pub window_lengths: Vec<usize>,
    /// Refit every this many trading days; 1 is daily.
    pub recalibrate_every: usize,
}

impl Default for CalibrationSchedule {
    fn default() -> Self {
        CalibrationSchedule {
            window_lengths: (45..=90).step_by(5).collect(),
            recalibrate_every: 1,
        }
    }
}

impl CalibrationSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.window_lengths.is_empty() {
            return Err(invalid("window_lengths", "empty"));
        }
        if self.window_lengths[0] == 0 || self.window_lengths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("window_lengths", "must be positive and strictly increasing"));
        }
        if self.recalibrate_every == 0 {
            return Err(invalid("recalibrate_every", "must be at least 1"));
        }
        Ok(())
    }

    pub fn longest(&self) -> usize {
        *self.window_lengths.last().unwrap_or(&0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Flow,
    Vwap,
}

impl TargetKind {
    pub fn name(self) -> &'static str {
        match self {
            TargetKind::Flow => "flow",
            TargetKind::Vwap => "vwap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastConfig {
    pub schedule: CalibrationSchedule,
    pub rho0: f64,
    pub fdr: FdrConfig,
    pub top_n: usize,
    pub min_trades: u64,
    pub lag_depth: usize,
    pub forest: ForestConfig,
    pub restarts: usize,
    /// Also compute the daily r_h and β series (longest window only).
    pub covariates: bool,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig {
            schedule: CalibrationSchedule::default(),
            rho0: 0.01,
            fdr: FdrConfig::default(),
            top_n: 500,
            min_trades: 100,
            lag_depth: 1,
            forest: ForestConfig::default(),
            restarts: DEFAULT_RESTARTS,
            covariates: false,
        }
    }
}

impl ForecastConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        validate_rho0(self.rho0)?;
        self.fdr.validate()?;
        if self.top_n == 0 {
            return Err(invalid("top_n", "must be at least 1"));
        }
        if self.lag_depth == 0 {
            return Err(invalid("lag_depth", "must be at least 1"));
        }
        Ok(())
    }
}

/// Everything the forecaster reads: all traders' states on the full grid and
/// the VWAP of every slice.
#[derive(Debug, Clone)]
pub struct MarketData<F> {
    pub matrix: StateMatrix<F>,
    pub vwap: Vec<Option<F>>,
}

impl<F: Real> MarketData<F> {
    pub fn from_trades(trades: &[TradeRecord<F>], grid: &TimeGrid, rho0: F) -> Result<Self> {
        Ok(MarketData {
            matrix: classify_states(trades, grid, rho0)?,
            vwap: vwap_series(trades, grid),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord<F> {
    /// End of the predicted slice, epoch ms.
    pub slice_end_ms: i64,
    pub day: NaiveDate,
    /// Local hour at which the predicted slice opens.
    pub hour: u8,
    /// One class per window length; 0 when that window produced no model.
    pub predictions: Vec<i8>,
    pub combined: i8,
    pub realized_sign: i8,
    pub realized_flow: F,
    pub realized_vwap_sign: Option<i8>,
}

impl<F> ForecastRecord<F> {
    /// Realized value of the forecast target, if defined.
    pub fn realized(&self, target: TargetKind) -> Option<i8> {
        match target {
            TargetKind::Flow => Some(self.realized_sign),
            TargetKind::Vwap => self.realized_vwap_sign,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyCovariate<F> {
    pub day: NaiveDate,
    pub r_h: Option<F>,
    pub beta: Option<F>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRun<F> {
    pub target: TargetKind,
    pub window_lengths: Vec<usize>,
    pub records: Vec<ForecastRecord<F>>,
    /// Days that could not be forecast or windows that produced no model.
    pub skipped: Vec<(NaiveDate, String)>,
    pub covariates: Vec<DailyCovariate<F>>,
}

/// Majority over the ±1 votes; zeros abstain and an exact tie gives 0.
pub fn majority_vote(votes: &[i8]) -> i8 {
    let up = votes.iter().filter(|&&v| v > 0).count();
    let down = votes.iter().filter(|&&v| v < 0).count();
    match up.cmp(&down) {
        std::cmp::Ordering::Greater => 1,
        std::cmp::Ordering::Less => -1,
        std::cmp::Ordering::Equal => 0,
    }
}

struct Calibration<F> {
    partition: GroupPartition,
    labels: Vec<u32>,
    models: Vec<Option<ForestModel>>,
    r_h: Option<F>,
    adjacency: Option<TraderLeadLagAdjacency>,
}

fn day_number(d: NaiveDate) -> u64 {
    d.num_days_from_ce() as u64
}

/// Group states over `matrix` with one series per entry of `labels`, in
/// that order; groups without any member present are inactive throughout.
fn aligned_groups<F: Real>(matrix: &StateMatrix<F>, partition: &GroupPartition, labels: &[u32], rho0: F) -> Result<GroupStates<F>> {
    let gs = aggregate_groups(matrix, partition, rho0)?;
    let blank = vec![TraderSliceState::<F>::unit(State::Inactive); matrix.n_slices()];
    let series = labels
        .iter()
        .map(|&l| {
            gs.series
                .iter()
                .find(|s| s.label == l)
                .cloned()
                .unwrap_or_else(|| GroupStateSeries { label: l, cells: blank.clone() })
        })
        .collect();
    Ok(GroupStates { grid: gs.grid, series })
}

fn targets_for<F: Real>(data: &MarketData<F>, target: TargetKind) -> Vec<Option<i8>> {
    match target {
        TargetKind::Flow => flow_sign_targets(&data.matrix),
        TargetKind::Vwap => changes(&data.vwap, data.matrix.grid()),
    }
}

#[allow(clippy::too_many_arguments)]
fn calibrate<F: Real>(
    data: &MarketData<F>,
    days: &[(NaiveDate, std::ops::Range<usize>)],
    k: usize,
    w: usize,
    targets: &[(TargetKind, Vec<Option<i8>>)],
    cfg: &ForecastConfig,
    seed: u64,
    covariates: bool,
) -> Result<std::result::Result<Calibration<F>, String>> {
    let unit = seed::derive(seed, &[day_number(days[k].0), w as u64]);
    let range = days[k - w].1.start..days[k - 1].1.end;
    let rho0 = F::lit(cfg.rho0);
    let win = data.matrix.window(range.clone());
    let active = filter_active(&win, cfg.top_n, cfg.min_trades)?;
    let svn = match build_svn(&active, &cfg.fdr) {
        Ok(s) => s,
        Err(Error::WindowTooShort { got, need }) => return Ok(Err(format!("window {w}: {got} slices, need {need}"))),
        Err(e) => return Err(e),
    };
    let graph = project_weighted(&svn);
    let partition = detect_communities_with::<F>(&graph, seed::derive(unit, &[0]), cfg.restarts);
    if partition.is_empty() {
        return Ok(Err(format!("window {w}: no validated links")));
    }
    let labels: Vec<u32> = partition.labels().into_iter().collect();
    let gs = aligned_groups(&win, &partition, &labels, rho0)?;
    let (x, slices) = build_predictors(&gs, cfg.lag_depth)?;
    let mut models = Vec::with_capacity(targets.len());
    let mut r_h = None;
    for (n, (kind, y_all)) in targets.iter().enumerate() {
        let mut keep = Vec::new();
        let mut y = Vec::new();
        for (r, &t) in slices.iter().enumerate() {
            if let Some(v) = y_all[range.start + t] {
                keep.push(r);
                y.push(v);
            }
        }
        let xs = x.select(&keep);
        let model = match train_forest(&xs, &y, &cfg.forest, seed::derive(unit, &[1, n as u64])) {
            Ok(m) => m,
            Err(Error::Insufficient(_)) => {
                models.push(None);
                continue;
            }
            Err(e) => return Err(e),
        };
        if covariates && *kind == TargetKind::Flow {
            let imp = permutation_importance::<F>(&model, &xs, &y, seed::derive(unit, &[2]))?;
            let h = xs.column_index(HOUR_COLUMN).expect("hour column");
            r_h = adjusted_rank_ratio(&imp, h).ok();
        }
        models.push(Some(model));
    }
    let adjacency = if covariates {
        let net = build_leadlag(&gs, &cfg.fdr, 1)?;
        Some(expand_trader_leadlag(&net, &partition))
    } else {
        None
    };
    Ok(Ok(Calibration {
        partition,
        labels,
        models,
        r_h,
        adjacency,
    }))
}

/// Walk forward over the trading days of the grid. For each day that has
/// enough history, every window length is refitted (on schedule) from the
/// trailing days that precede it, then each slice of the day is predicted
/// from the states of the slices before it.
pub fn rolling_forecast<F: Real>(data: &MarketData<F>, cfg: &ForecastConfig, target: TargetKind, seed: u64) -> Result<ForecastRun<F>> {
    let mut runs = rolling_forecast_multi(data, cfg, &[target], seed)?;
    Ok(runs.remove(0))
}

/// Same as [`rolling_forecast`] for several targets sharing one clustering
/// per calibration.
pub fn rolling_forecast_multi<F: Real>(data: &MarketData<F>, cfg: &ForecastConfig, kinds: &[TargetKind], seed: u64) -> Result<Vec<ForecastRun<F>>> {
    cfg.validate()?;
    if kinds.is_empty() {
        return Err(invalid("targets", "empty"));
    }
    let grid = data.matrix.grid();
    if data.vwap.len() != grid.len() {
        return Err(Error::Schema {
            expected: grid.len(),
            got: data.vwap.len(),
        });
    }
    let days = grid.days();
    let windows = &cfg.schedule.window_lengths;
    let longest = cfg.schedule.longest();
    let rho0 = F::lit(cfg.rho0);
    let targets: Vec<(TargetKind, Vec<Option<i8>>)> = kinds.iter().map(|&k| (k, targets_for(data, k))).collect();
    let flow = flow_sign_targets(&data.matrix);
    let vwap = changes(&data.vwap, grid);

    let mut runs: Vec<ForecastRun<F>> = kinds
        .iter()
        .map(|&k| ForecastRun {
            target: k,
            window_lengths: windows.clone(),
            records: Vec::new(),
            skipped: Vec::new(),
            covariates: Vec::new(),
        })
        .collect();
    for (d, _) in days.iter().take(longest) {
        for run in &mut runs {
            run.skipped.push((*d, format!("fewer than {longest} prior trading days")));
        }
    }

    let mut current: Vec<std::result::Result<Calibration<F>, String>> = Vec::new();
    let mut previous_adjacency: Option<TraderLeadLagAdjacency> = None;
    let mut beta: Option<F> = None;
    for k in longest..days.len() {
        if (k - longest) % cfg.schedule.recalibrate_every == 0 {
            current = windows
                .par_iter()
                .map(|&w| calibrate(data, &days, k, w, &targets, cfg, seed, cfg.covariates && w == longest))
                .collect::<Result<Vec<_>>>()?;
            if cfg.covariates {
                let adj = current.last().and_then(|c| c.as_ref().ok()).and_then(|c| c.adjacency.clone());
                beta = match (&previous_adjacency, &adj) {
                    (Some(a), Some(b)) => leadlag_overlap_beta(a, b),
                    _ => None,
                };
                previous_adjacency = adj;
            }
        }
        let (day, range) = &days[k];
        for run in &mut runs {
            for (c, w) in current.iter().zip(windows) {
                if let Err(reason) = c {
                    run.skipped.push((*day, reason.clone()));
                } else if let Ok(cal) = c {
                    let n = kinds.iter().position(|&x| x == run.target).unwrap();
                    if cal.models[n].is_none() {
                        run.skipped.push((*day, format!("window {w}: too few training rows")));
                    }
                }
            }
            if cfg.covariates {
                let r_h = current.last().and_then(|c| c.as_ref().ok()).and_then(|c| c.r_h);
                run.covariates.push(DailyCovariate { day: *day, r_h, beta });
            }
        }

        let day_matrix = data.matrix.window(range.clone());
        let mut per_window: Vec<Vec<(usize, Vec<i8>)>> = Vec::with_capacity(windows.len());
        for c in &current {
            let mut out = Vec::new();
            if let Ok(cal) = c {
                let gs = aligned_groups(&day_matrix, &cal.partition, &cal.labels, rho0)?;
                if let Ok((x, slices)) = build_predictors(&gs, cfg.lag_depth) {
                    for (r, &t) in slices.iter().enumerate() {
                        let mut classes = Vec::with_capacity(kinds.len());
                        for m in &cal.models {
                            classes.push(match m {
                                Some(model) => forest_predict::<F>(model, x.row(r))?.0,
                                None => 0,
                            });
                        }
                        out.push((t, classes));
                    }
                }
            }
            per_window.push(out);
        }

        for t in 0..range.len() {
            let g = range.start + t;
            if !grid.is_contiguous(g) || t + 1 >= range.len() {
                continue;
            }
            let target_slice = &grid.slices[g + 1];
            for (n, run) in runs.iter_mut().enumerate() {
                if run.target == TargetKind::Vwap && vwap[g].is_none() {
                    continue;
                }
                let mut predictions = Vec::with_capacity(windows.len());
                let mut any_row = false;
                for pw in &per_window {
                    match pw.iter().find(|(s, _)| *s == t) {
                        Some((_, classes)) => {
                            any_row = true;
                            predictions.push(classes[n]);
                        }
                        None => predictions.push(0),
                    }
                }
                if !any_row {
                    continue;
                }
                run.records.push(ForecastRecord {
                    slice_end_ms: target_slice.end_ms,
                    day: target_slice.day,
                    hour: target_slice.hour,
                    combined: majority_vote(&predictions),
                    predictions,
                    realized_sign: flow[g].expect("contiguous slice"),
                    realized_flow: data.matrix.net_flow(g + 1),
                    realized_vwap_sign: vwap[g],
                });
            }
        }
    }
    Ok(runs)
}
