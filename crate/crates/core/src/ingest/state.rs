use std::cmp::Ordering;
use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::grid::TimeGrid;
use super::trade::{TradeRecord, TraderId};
use crate::error::{invalid, Error, Result};
use crate::num::Real;

/// Default imbalance threshold ρ₀.
pub const DEFAULT_RHO0: f64 = 0.01;
/// Admissible range of ρ₀.
pub const RHO0_RANGE: (f64, f64) = (0.01, 0.1);

/// Categorical trading state of a trader (or group) during one slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(i8)]
pub enum State {
    Sell = -1,
    Inactive = 0,
    Buy = 1,
    Neutral = 2,
}

impl State {
    /// States that take part in co-occurrence tests; inactivity never does.
    pub const ACTIVE: [State; 3] = [State::Sell, State::Buy, State::Neutral];

    #[inline]
    pub fn code(self) -> i8 {
        self as i8
    }

    pub fn from_code(code: i8) -> Option<State> {
        match code {
            -1 => Some(State::Sell),
            0 => Some(State::Inactive),
            1 => Some(State::Buy),
            2 => Some(State::Neutral),
            _ => None,
        }
    }

    /// Position in [`State::ACTIVE`].
    #[inline]
    pub fn active_index(self) -> Option<usize> {
        match self {
            State::Sell => Some(0),
            State::Buy => Some(1),
            State::Neutral => Some(2),
            State::Inactive => None,
        }
    }

    /// Threshold rule on the imbalance ratio. The neutral band is closed:
    /// `|ρ| = ρ₀` is neutral.
    pub fn classify<F: Real>(v: F, g: F, rho0: F) -> State {
        if g <= F::zero() {
            return State::Inactive;
        }
        let rho = v / g;
        if rho > rho0 {
            State::Buy
        } else if rho < -rho0 {
            State::Sell
        } else {
            State::Neutral
        }
    }

    /// Signed direction: +1 buy, -1 sell, 0 otherwise.
    pub fn direction(self) -> i8 {
        match self {
            State::Buy => 1,
            State::Sell => -1,
            _ => 0,
        }
    }
}

/// Net and gross volume of one trader in one slice, with the derived state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraderSliceState<F> {
    pub v: F,
    pub g: F,
    pub trades: u32,
    pub sigma: State,
}

impl<F: Real> Default for TraderSliceState<F> {
    fn default() -> Self {
        TraderSliceState {
            v: F::zero(),
            g: F::zero(),
            trades: 0,
            sigma: State::Inactive,
        }
    }
}

impl<F: Real> TraderSliceState<F> {
    pub fn from_volumes(v: F, g: F, trades: u32, rho0: F) -> Self {
        TraderSliceState {
            v,
            g,
            trades,
            sigma: State::classify(v, g, rho0),
        }
    }

    /// A unit-volume cell that realises `state` under any admissible ρ₀.
    pub fn unit(state: State) -> Self {
        let (v, g) = match state {
            State::Buy => (F::one(), F::one()),
            State::Sell => (-F::one(), F::one()),
            State::Neutral => (F::zero(), F::one() + F::one()),
            State::Inactive => (F::zero(), F::zero()),
        };
        TraderSliceState {
            v,
            g,
            trades: if state == State::Inactive { 0 } else { 1 },
            sigma: state,
        }
    }

    /// Imbalance ratio V/G; undefined for an inactive slice.
    pub fn rho(&self) -> Option<F> {
        (self.g > F::zero()).then(|| self.v / self.g)
    }
}

pub fn validate_rho0<F: Real>(rho0: F) -> Result<()> {
    let (lo, hi) = RHO0_RANGE;
    let r = rho0.to_f64_lossy();
    // Small slack so that 0.1f32 is admitted.
    if !(r >= lo * (1.0 - 1e-6) && r <= hi * (1.0 + 1e-6)) {
        return Err(invalid("rho0", format!("{r} outside [{lo}, {hi}]")));
    }
    Ok(())
}

/// Trader × slice table of [`TraderSliceState`], traders sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix<F> {
    traders: Vec<TraderId>,
    grid: TimeGrid,
    cells: Vec<TraderSliceState<F>>,
}

impl<F: Real> StateMatrix<F> {
    /// Build from rows; traders are re-sorted by id.
    pub fn from_rows(grid: TimeGrid, rows: Vec<(TraderId, Vec<TraderSliceState<F>>)>) -> Result<Self> {
        let mut rows = rows;
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        if rows.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(invalid("traders", "duplicate trader id"));
        }
        let t = grid.len();
        let mut traders = Vec::with_capacity(rows.len());
        let mut cells = Vec::with_capacity(rows.len() * t);
        for (id, row) in rows {
            if row.len() != t {
                return Err(Error::Schema { expected: t, got: row.len() });
            }
            traders.push(id);
            cells.extend(row);
        }
        Ok(StateMatrix { traders, grid, cells })
    }

    /// Build from state codes only, using unit volumes.
    pub fn from_states(grid: TimeGrid, rows: Vec<(TraderId, Vec<State>)>) -> Result<Self> {
        Self::from_rows(
            grid,
            rows.into_iter()
                .map(|(id, states)| (id, states.into_iter().map(TraderSliceState::unit).collect()))
                .collect(),
        )
    }

    pub fn empty(grid: TimeGrid) -> Self {
        StateMatrix {
            traders: Vec::new(),
            grid,
            cells: Vec::new(),
        }
    }

    pub fn traders(&self) -> &[TraderId] {
        &self.traders
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_traders(&self) -> usize {
        self.traders.len()
    }

    pub fn n_slices(&self) -> usize {
        self.grid.len()
    }

    pub fn index_of(&self, trader: &TraderId) -> Option<usize> {
        self.traders.binary_search(trader).ok()
    }

    pub fn row(&self, i: usize) -> &[TraderSliceState<F>] {
        let t = self.n_slices();
        &self.cells[i * t..(i + 1) * t]
    }

    pub fn cell(&self, i: usize, t: usize) -> &TraderSliceState<F> {
        &self.cells[i * self.n_slices() + t]
    }

    pub fn states(&self, i: usize) -> impl Iterator<Item = State> + '_ {
        self.row(i).iter().map(|c| c.sigma)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&TraderId, &[TraderSliceState<F>])> {
        self.traders.iter().enumerate().map(move |(i, id)| (id, self.row(i)))
    }

    /// Number of trades of trader `i` over the whole grid.
    pub fn trade_count(&self, i: usize) -> u64 {
        self.row(i).iter().map(|c| u64::from(c.trades)).sum()
    }

    /// Σᵢ Vᵢ(t) over every trader in the matrix.
    pub fn net_flow(&self, t: usize) -> F {
        (0..self.n_traders()).map(|i| self.cell(i, t).v).sum()
    }

    /// Restriction to a slice range. Traders without a trade inside the range
    /// are dropped, so the result equals classifying only the trades that
    /// fall in the window.
    pub fn window(&self, range: Range<usize>) -> StateMatrix<F> {
        let grid = self.grid.window(range.clone());
        let mut traders = Vec::new();
        let mut cells = Vec::new();
        for (i, id) in self.traders.iter().enumerate() {
            let row = &self.row(i)[range.clone()];
            if row.iter().any(|c| c.trades > 0) {
                traders.push(id.clone());
                cells.extend_from_slice(row);
            }
        }
        StateMatrix { traders, grid, cells }
    }

    /// Keep only the listed traders (unknown ids are ignored).
    pub fn restrict<'a>(&self, keep: impl IntoIterator<Item = &'a TraderId>) -> StateMatrix<F> {
        let mut idx: Vec<usize> = keep.into_iter().filter_map(|id| self.index_of(id)).collect();
        idx.sort_unstable();
        idx.dedup();
        let mut cells = Vec::with_capacity(idx.len() * self.n_slices());
        for &i in &idx {
            cells.extend_from_slice(self.row(i));
        }
        StateMatrix {
            traders: idx.iter().map(|&i| self.traders[i].clone()).collect(),
            grid: self.grid.clone(),
            cells,
        }
    }
}

/// Classify every trader in every grid slice. Trades outside the grid (off
/// session, weekends) are ignored; the matrix lists every trader with at
/// least one in-grid trade.
///
/// Volumes inside a cell are accumulated in a canonical trade order, so the
/// result does not depend on the order of `trades`.
pub fn classify_states<F: Real>(trades: &[TradeRecord<F>], grid: &TimeGrid, rho0: F) -> Result<StateMatrix<F>> {
    validate_rho0(rho0)?;
    if grid.is_empty() {
        return Err(Error::Empty("time grid"));
    }

    let mut located: Vec<(usize, &TradeRecord<F>)> = trades
        .iter()
        .filter_map(|tr| grid.slice_of(tr.timestamp_ms).map(|t| (t, tr)))
        .collect();
    located.sort_by(|(ta, a), (tb, b)| canonical_order(*ta, a, *tb, b));

    let mut ids: Vec<TraderId> = located.iter().map(|(_, tr)| tr.trader_id.clone()).collect();
    ids.sort_unstable();
    ids.dedup();
    let row_of: HashMap<&TraderId, usize> = ids.iter().enumerate().map(|(i, id)| (id, i)).collect();

    let t_len = grid.len();
    let mut cells = vec![TraderSliceState::<F>::default(); ids.len() * t_len];
    for (t, tr) in &located {
        let c = &mut cells[row_of[&tr.trader_id] * t_len + t];
        c.v += tr.signed_volume;
        c.g += tr.signed_volume.abs();
        c.trades += 1;
    }
    for c in &mut cells {
        c.sigma = State::classify(c.v, c.g, rho0);
    }
    Ok(StateMatrix {
        traders: ids,
        grid: grid.clone(),
        cells,
    })
}

pub(crate) fn canonical_order<F: Real>(ta: usize, a: &TradeRecord<F>, tb: usize, b: &TradeRecord<F>) -> Ordering {
    a.trader_id
        .cmp(&b.trader_id)
        .then(ta.cmp(&tb))
        .then(a.timestamp_ms.cmp(&b.timestamp_ms))
        .then_with(|| total_cmp(a.signed_volume, b.signed_volume))
        .then_with(|| total_cmp(a.price, b.price))
}

fn total_cmp<F: Real>(a: F, b: F) -> Ordering {
    a.to_f64_lossy().total_cmp(&b.to_f64_lossy())
}

/// Keep the `top_n` most active traders (by trade count in the matrix),
/// then drop those with fewer than `min_trades` trades. Ties in activity are
/// broken by trader id.
pub fn filter_active<F: Real>(matrix: &StateMatrix<F>, top_n: usize, min_trades: u64) -> Result<StateMatrix<F>> {
    if top_n == 0 {
        return Err(invalid("top_n", "must be at least 1"));
    }
    let mut ranked: Vec<(u64, usize)> = (0..matrix.n_traders()).map(|i| (matrix.trade_count(i), i)).collect();
    // Rows are already in id order, so the index is the id tie-break.
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let keep: Vec<&TraderId> = ranked
        .iter()
        .take(top_n)
        .filter(|(n, _)| *n >= min_trades)
        .map(|&(_, i)| &matrix.traders[i])
        .collect();
    Ok(matrix.restrict(keep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::grid::SessionConfig;
    use proptest::prelude::*;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::contiguous(SessionConfig::default(), 1_704_700_800_000, n).unwrap()
    }

    fn trade(id: &str, t: usize, v: f64) -> TradeRecord<f64> {
        TradeRecord::new(id, 1_704_700_800_000 + t as i64 * 3_600_000 + 1, "EURUSD", v, 1.1).unwrap()
    }

    #[test]
    fn single_buy_is_buyer() {
        let m = classify_states(&[trade("a", 0, 10.0)], &grid(2), 0.01).unwrap();
        let c = m.cell(0, 0);
        assert_eq!((c.v, c.g, c.sigma), (10.0, 10.0, State::Buy));
        assert_eq!(c.rho(), Some(1.0));
    }

    #[test]
    fn empty_slice_is_inactive() {
        let m = classify_states(&[trade("a", 0, 10.0)], &grid(2), 0.01).unwrap();
        let c = m.cell(0, 1);
        assert_eq!((c.v, c.g, c.sigma), (0.0, 0.0, State::Inactive));
        assert_eq!(c.rho(), None);
    }

    #[test]
    fn small_imbalance_is_neutral() {
        // V = 0.005 G
        let trades = [trade("a", 0, 100.5), trade("a", 0, -99.5)];
        let m = classify_states(&trades, &grid(1), 0.01).unwrap();
        let c = m.cell(0, 0);
        assert!((c.v - 0.005 * c.g).abs() < 1e-12);
        assert_eq!(c.sigma, State::Neutral);
    }

    #[test]
    fn boundary_is_neutral() {
        assert_eq!(State::classify(1.0, 100.0, 0.01), State::Neutral);
        assert_eq!(State::classify(-1.0, 100.0, 0.01), State::Neutral);
        assert_eq!(State::classify(1.0001, 100.0, 0.01), State::Buy);
    }

    #[test]
    fn empty_trades_give_empty_matrix() {
        let m = classify_states::<f64>(&[], &grid(3), 0.01).unwrap();
        assert_eq!(m.n_traders(), 0);
        assert_eq!(m.n_slices(), 3);
    }

    #[test]
    fn rho0_outside_range_rejected() {
        assert!(classify_states::<f64>(&[], &grid(3), 0.5).is_err());
        assert!(classify_states::<f32>(&[], &grid(3), 0.1).is_ok());
    }

    #[test]
    fn off_grid_trades_ignored() {
        let outside = TradeRecord::new("b", 0, "EURUSD", 1.0, 1.0).unwrap();
        let m = classify_states(&[trade("a", 0, 1.0), outside], &grid(1), 0.01).unwrap();
        assert_eq!(m.traders(), &[TraderId::from("a")]);
    }

    fn population(counts: &[(&str, usize)]) -> StateMatrix<f64> {
        let g = grid(200);
        let rows = counts
            .iter()
            .map(|&(id, n)| {
                let row = (0..200)
                    .map(|t| if t < n { TraderSliceState::unit(State::Buy) } else { TraderSliceState::default() })
                    .collect();
                (TraderId::from(id), row)
            })
            .collect();
        StateMatrix::from_rows(g, rows).unwrap()
    }

    #[test]
    fn filter_keeps_top_n() {
        let ids: Vec<String> = (0..600).map(|i| format!("t{i:03}")).collect();
        let g = grid(1);
        let rows = ids
            .iter()
            .map(|id| (TraderId::new(id.clone()), vec![TraderSliceState::unit(State::Buy)]))
            .collect();
        let m = StateMatrix::<f64>::from_rows(g, rows).unwrap();
        let f = filter_active(&m, 500, 0).unwrap();
        assert_eq!(f.n_traders(), 500);
        // equal activity: lowest ids win
        assert_eq!(f.traders()[499].as_str(), "t499");
    }

    #[test]
    fn filter_drops_below_min_trades() {
        let m = population(&[("a", 99), ("b", 100), ("c", 150)]);
        let f = filter_active(&m, 500, 100).unwrap();
        assert_eq!(f.traders(), &[TraderId::from("b"), TraderId::from("c")]);
    }

    #[test]
    fn filter_wider_than_population() {
        let names: Vec<String> = (0..10).map(|i| format!("x{i}")).collect();
        let spec: Vec<(&str, usize)> = names.iter().map(|s| (s.as_str(), 5)).collect();
        let f = filter_active(&population(&spec), 500, 0).unwrap();
        assert_eq!(f.n_traders(), 10);
    }

    #[test]
    fn window_drops_idle_traders() {
        let m = population(&[("a", 10), ("b", 150)]);
        let w = m.window(100..200);
        assert_eq!(w.traders(), &[TraderId::from("b")]);
        assert_eq!(w.n_slices(), 100);
    }

    proptest! {
        #[test]
        fn cells_obey_threshold_rule(
            vols in proptest::collection::vec((0usize..4, 0usize..6, -50.0f64..50.0), 1..80),
            rho0 in 0.01f64..0.1,
        ) {
            let trades: Vec<_> = vols
                .iter()
                .filter(|(_, _, v)| *v != 0.0)
                .map(|&(k, t, v)| trade(&format!("t{k}"), t, v))
                .collect();
            let m = classify_states(&trades, &grid(6), rho0).unwrap();
            for i in 0..m.n_traders() {
                for c in m.row(i) {
                    prop_assert!(c.v.abs() <= c.g * (1.0 + 1e-12));
                    prop_assert!(c.g >= 0.0);
                    prop_assert_eq!(c.sigma == State::Inactive, c.trades == 0);
                    if let Some(rho) = c.rho() {
                        let expect = if rho > rho0 { State::Buy } else if rho < -rho0 { State::Sell } else { State::Neutral };
                        prop_assert_eq!(c.sigma, expect);
                    }
                }
            }
        }

        #[test]
        fn classification_ignores_trade_order(
            vols in proptest::collection::vec((0usize..3, 0usize..4, -50.0f64..50.0), 1..60),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let trades: Vec<_> = vols
                .iter()
                .filter(|(_, _, v)| *v != 0.0)
                .map(|&(k, t, v)| trade(&format!("t{k}"), t, v))
                .collect();
            let mut shuffled = trades.clone();
            shuffled.shuffle(&mut crate::seed::rng(seed, &[]));
            let a = classify_states(&trades, &grid(4), 0.01).unwrap();
            let b = classify_states(&shuffled, &grid(4), 0.01).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn filter_ignores_input_order(counts in proptest::collection::vec(0usize..200, 1..30), top in 1usize..40, min in 0u64..150) {
            let names: Vec<String> = (0..counts.len()).map(|i| format!("id{i}")).collect();
            let spec: Vec<(&str, usize)> = names.iter().map(|s| s.as_str()).zip(counts.iter().copied()).collect();
            let mut reversed = spec.clone();
            reversed.reverse();
            let a = filter_active(&population(&spec), top, min).unwrap();
            let b = filter_active(&population(&reversed), top, min).unwrap();
            prop_assert_eq!(a.traders(), b.traders());
        }
    }
}
