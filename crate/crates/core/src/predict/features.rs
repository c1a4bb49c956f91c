use crate::error::{invalid, Error, Result};
use crate::ingest::state::canonical_order;
use crate::ingest::{StateMatrix, TimeGrid, TradeRecord};
use crate::leadlag::GroupStates;
use crate::learn::PredictorMatrix;
use crate::num::{sign_of, Real};

pub const HOUR_COLUMN: &str = "hour";

fn column_name(label: u32, lag: usize) -> String {
    if lag == 0 {
        format!("g{label}")
    } else {
        format!("g{label}_lag{lag}")
    }
}

/// One row per slice `t` whose lags `t - lag_depth ..= t` are back to back:
/// the current state of every group, then each lag in turn, then the hour.
/// Returns the matrix and the slice index of every row.
pub fn build_predictors<F: Real>(groups: &GroupStates<F>, lag_depth: usize) -> Result<(PredictorMatrix, Vec<usize>)> {
    if lag_depth == 0 {
        return Err(invalid("lag_depth", "must be at least 1"));
    }
    let grid = &groups.grid;
    if grid.len() < lag_depth + 1 {
        return Err(Error::WindowTooShort {
            got: grid.len(),
            need: lag_depth + 1,
        });
    }
    let mut columns = Vec::with_capacity((lag_depth + 1) * groups.series.len() + 1);
    for l in 0..=lag_depth {
        columns.extend(groups.series.iter().map(|s| column_name(s.label, l)));
    }
    columns.push(HOUR_COLUMN.to_owned());
    let mut x = PredictorMatrix::new(columns);
    let mut slices = Vec::new();
    let mut row = Vec::with_capacity(x.n_cols());
    for t in lag_depth..grid.len() {
        if !grid.run_is_contiguous(t - lag_depth, lag_depth) {
            continue;
        }
        row.clear();
        for l in 0..=lag_depth {
            row.extend(groups.series.iter().map(|s| s.cells[t - l].sigma.code()));
        }
        row.push(grid.slices[t].hour as i8);
        x.push_row(&row)?;
        slices.push(t);
    }
    Ok((x, slices))
}

/// Entry `t` is the sign of the summed net volume of every trader in slice
/// `t + 1`; `None` when slice `t + 1` does not follow `t` directly.
pub fn flow_sign_targets<F: Real>(matrix: &StateMatrix<F>) -> Vec<Option<i8>> {
    let grid = matrix.grid();
    (0..grid.len())
        .map(|t| grid.is_contiguous(t).then(|| sign_of(matrix.net_flow(t + 1))))
        .collect()
}

/// Volume-weighted average price of each slice; `None` for empty slices.
pub fn vwap_series<F: Real>(trades: &[TradeRecord<F>], grid: &TimeGrid) -> Vec<Option<F>> {
    let mut located: Vec<(usize, &TradeRecord<F>)> = trades
        .iter()
        .filter_map(|tr| grid.slice_of(tr.timestamp_ms).map(|t| (t, tr)))
        .collect();
    located.sort_by(|(ta, a), (tb, b)| ta.cmp(tb).then_with(|| canonical_order(*ta, a, *tb, b)));
    let mut num = vec![F::zero(); grid.len()];
    let mut den = vec![F::zero(); grid.len()];
    for (t, tr) in located {
        let w = tr.signed_volume.abs();
        num[t] += tr.price * w;
        den[t] += w;
    }
    num.into_iter()
        .zip(den)
        .map(|(n, d)| (d > F::zero()).then(|| n / d))
        .collect()
}

/// Entry `t` is the sign of `VWAP(t+1) - VWAP(t)`, or `None` when either
/// slice is empty or the two are not back to back.
pub fn vwap_change_targets<F: Real>(trades: &[TradeRecord<F>], grid: &TimeGrid) -> Vec<Option<i8>> {
    changes(&vwap_series(trades, grid), grid)
}

pub(crate) fn changes<F: Real>(vwap: &[Option<F>], grid: &TimeGrid) -> Vec<Option<i8>> {
    (0..grid.len())
        .map(|t| match (grid.is_contiguous(t), vwap[t], vwap.get(t + 1).copied().flatten()) {
            (true, Some(a), Some(b)) => Some(sign_of(b - a)),
            _ => None,
        })
        .collect()
}
