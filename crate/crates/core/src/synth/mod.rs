//! Synthetic market with known structure: planted synchronous groups, lag-one
//! lead-lag between groups, heavy-tailed background activity and a price
//! whose drift follows the lagged planted flow.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::community::GroupPartition;
use crate::error::{Error, Result};
use crate::ingest::{SessionConfig, State, TimeGrid, TradeRecord, TraderId};
use crate::seed;

/// Probability of the neutral state in an independent draw.
pub const NEUTRAL_PROBABILITY: f64 = 0.2;

/// Upper bound on a background trader's trade count; the law above it
/// carries negligible mass for the exponents of interest.
pub const MAX_BACKGROUND_TRADES: u64 = 200_000;

const ROUND_LOTS: [f64; 4] = [10.0, 20.0, 50.0, 100.0];

/// Group `to` copies the state group `from` had one slice earlier, with
/// probability `fidelity`. `sign = -1` swaps buy and sell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedEdge {
    pub from: usize,
    pub to: usize,
    pub sign: i8,
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarketSpec {
    /// Group members come first; the remaining traders are background noise.
    pub n_traders: usize,
    pub group_sizes: Vec<usize>,
    /// Probability that a member takes its group's intended state.
    pub sync_fidelity: f64,
    pub edges: Vec<PlantedEdge>,
    /// Exponent of the power law of background traders' trade counts.
    pub alpha: f64,
    pub session: SessionConfig,
    pub start: NaiveDate,
    pub n_days: usize,
    /// Price drift per unit of lagged planted flow.
    pub kappa: f64,
    /// Standard deviation of the per-slice price innovation.
    pub noise: f64,
    pub start_price: f64,
    /// Probability that a trade size is a round lot.
    pub round_bias: f64,
    pub instrument: String,
    pub seed: u64,
}

impl Default for MarketSpec {
    fn default() -> Self {
        MarketSpec {
            n_traders: 60,
            group_sizes: vec![10; 5],
            sync_fidelity: 0.9,
            edges: Vec::new(),
            alpha: 2.0,
            session: SessionConfig::default(),
            start: NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(),
            n_days: 100,
            kappa: 0.0,
            noise: 1e-4,
            start_price: 1.1,
            round_bias: 0.6,
            instrument: "EURUSD".to_owned(),
            seed: 0,
        }
    }
}

fn spec_error(msg: impl Into<String>) -> Error {
    Error::MarketSpec(msg.into())
}

impl MarketSpec {
    pub fn validate(&self) -> Result<()> {
        let members: usize = self.group_sizes.iter().sum();
        if members > self.n_traders {
            return Err(spec_error(format!("group sizes sum to {members} > n_traders = {}", self.n_traders)));
        }
        if self.group_sizes.contains(&0) {
            return Err(spec_error("empty group"));
        }
        if !(0.0..=1.0).contains(&self.sync_fidelity) {
            return Err(spec_error(format!("sync_fidelity {} outside [0, 1]", self.sync_fidelity)));
        }
        let mut followed = vec![false; self.group_sizes.len()];
        for e in &self.edges {
            if e.from >= self.group_sizes.len() || e.to >= self.group_sizes.len() {
                return Err(spec_error(format!("edge {} -> {} names a missing group", e.from, e.to)));
            }
            if !(0.0..=1.0).contains(&e.fidelity) {
                return Err(spec_error(format!("edge fidelity {} outside [0, 1]", e.fidelity)));
            }
            if e.sign != 1 && e.sign != -1 {
                return Err(spec_error(format!("edge sign {} is not ±1", e.sign)));
            }
            if std::mem::replace(&mut followed[e.to], true) {
                return Err(spec_error(format!("group {} follows more than one leader", e.to)));
            }
        }
        if !(self.alpha > 1.0) {
            return Err(spec_error(format!("alpha {} must exceed 1", self.alpha)));
        }
        if self.n_days == 0 {
            return Err(spec_error("n_days must be positive"));
        }
        if !(self.kappa.is_finite() && self.noise >= 0.0 && self.start_price > 0.0) {
            return Err(spec_error("price parameters must be finite with noise ≥ 0 and start_price > 0"));
        }
        if !(0.0..=1.0).contains(&self.round_bias) {
            return Err(spec_error(format!("round_bias {} outside [0, 1]", self.round_bias)));
        }
        self.session.validate()
    }

    /// Last calendar day needed to obtain `n_days` trading days.
    fn last_day(&self) -> NaiveDate {
        let mut d = self.start;
        let mut left = self.n_days;
        loop {
            let weekend = matches!(d.weekday(), Weekday::Sat | Weekday::Sun);
            if self.session.include_weekends || !weekend {
                left -= 1;
                if left == 0 {
                    return d;
                }
            }
            d = d.succ_opt().expect("calendar overflow");
        }
    }

    pub fn trader_id(&self, k: usize) -> TraderId {
        let width = self.n_traders.max(1).to_string().len();
        TraderId::new(format!("T{k:0width$}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Members only; group `g` of the spec has label `g + 1`.
    pub partition: GroupPartition,
    pub edges: Vec<PlantedEdge>,
    /// Intended state code per group and slice.
    pub intended: Vec<Vec<i8>>,
}

impl GroundTruth {
    /// Planted edges as (from label, to label).
    pub fn edge_labels(&self) -> Vec<(u32, u32)> {
        self.edges.iter().map(|e| (e.from as u32 + 1, e.to as u32 + 1)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticMarket {
    pub grid: TimeGrid,
    /// Sorted by timestamp.
    pub trades: Vec<TradeRecord<f64>>,
    pub truth: GroundTruth,
}

fn draw_state(rng: &mut ChaCha8Rng) -> State {
    let u: f64 = rng.random();
    if u < NEUTRAL_PROBABILITY {
        State::Neutral
    } else if u < NEUTRAL_PROBABILITY + (1.0 - NEUTRAL_PROBABILITY) / 2.0 {
        State::Buy
    } else {
        State::Sell
    }
}

fn draw_size(rng: &mut ChaCha8Rng, round_bias: f64) -> f64 {
    if rng.random_bool(round_bias) {
        ROUND_LOTS[rng.random_range(0..ROUND_LOTS.len())]
    } else {
        // log-uniform on [1, 200], cent resolution
        let x = (rng.random::<f64>() * 200f64.ln()).exp();
        ((x * 100.0).round() / 100.0).max(0.01)
    }
}

/// Discrete power law on {1, 2, ...} by rounding the continuous law with
/// lower bound ½.
pub fn draw_power_law(rng: &mut ChaCha8Rng, alpha: f64) -> u64 {
    let u: f64 = rng.random();
    let x = 0.5 * (1.0 - u).powf(-1.0 / (alpha - 1.0)) + 0.5;
    if x >= u64::MAX as f64 {
        u64::MAX
    } else {
        (x.floor() as u64).max(1)
    }
}

fn mapped(s: State, sign: i8) -> State {
    match (s, sign) {
        (State::Buy, -1) => State::Sell,
        (State::Sell, -1) => State::Buy,
        (s, _) => s,
    }
}

pub fn generate_market(spec: &MarketSpec) -> Result<SyntheticMarket> {
    spec.validate()?;
    let grid = TimeGrid::for_dates(spec.session.clone(), spec.start, spec.last_day())?;
    let n_slices = grid.len();
    let n_groups = spec.group_sizes.len();
    let step = spec.session.slice_ms();
    let mut rng = seed::rng(spec.seed, &[0]);

    let leader_of: BTreeMap<usize, PlantedEdge> = spec.edges.iter().map(|e| (e.to, *e)).collect();
    let mut intended = vec![vec![State::Inactive; n_slices]; n_groups];
    for t in 0..n_slices {
        let linked = t > 0 && grid.is_contiguous(t - 1);
        for g in 0..n_groups {
            let fresh = draw_state(&mut rng);
            let copy = leader_of.get(&g).filter(|e| linked && rng.random_bool(e.fidelity));
            intended[g][t] = match copy {
                Some(e) => mapped(intended[e.from][t - 1], e.sign),
                None => fresh,
            };
        }
    }

    let mut trades = Vec::new();
    let mut push = |rng: &mut ChaCha8Rng, trader: &TraderId, t: usize, v: f64, price: f64| -> Result<()> {
        let ts = grid.slices[t].start_ms + rng.random_range(0..step);
        trades.push(TradeRecord::new(trader.as_str(), ts, spec.instrument.as_str(), v, price)?);
        Ok(())
    };

    // price path
    let total_members: usize = spec.group_sizes.iter().sum();
    let mut mid = Vec::with_capacity(n_slices);
    let mut m = spec.start_price;
    for t in 0..n_slices {
        if t > 0 {
            let eps: f64 = StandardNormal.sample(&mut rng);
            m += spec.noise * eps;
            if grid.is_contiguous(t - 1) && total_members > 0 {
                let flow: f64 = (0..n_groups)
                    .map(|g| spec.group_sizes[g] as f64 * f64::from(intended[g][t - 1].direction()))
                    .sum::<f64>()
                    / total_members as f64;
                m += spec.kappa * flow;
            }
            m = m.max(spec.start_price * 1e-3);
        }
        mid.push(m);
    }
    let price_at = |rng: &mut ChaCha8Rng, t: usize| -> f64 {
        let eps: f64 = StandardNormal.sample(rng);
        (mid[t] + 0.1 * spec.noise * eps).max(spec.start_price * 1e-3)
    };

    // group members
    let mut assignment = BTreeMap::new();
    let mut k = 0;
    let mut member_groups = Vec::new();
    for (g, &size) in spec.group_sizes.iter().enumerate() {
        for _ in 0..size {
            assignment.insert(spec.trader_id(k), g as u32 + 1);
            member_groups.push((spec.trader_id(k), g));
            k += 1;
        }
    }
    for t in 0..n_slices {
        for (id, g) in &member_groups {
            let s = if rng.random_bool(spec.sync_fidelity) { intended[*g][t] } else { draw_state(&mut rng) };
            match s {
                State::Buy | State::Sell => {
                    let dir = f64::from(s.direction());
                    for _ in 0..rng.random_range(1..=3) {
                        let size = draw_size(&mut rng, spec.round_bias);
                        let p = price_at(&mut rng, t);
                        push(&mut rng, id, t, dir * size, p)?;
                    }
                }
                State::Neutral => {
                    let size = draw_size(&mut rng, spec.round_bias);
                    for dir in [1.0, -1.0] {
                        let p = price_at(&mut rng, t);
                        push(&mut rng, id, t, dir * size, p)?;
                    }
                }
                State::Inactive => {}
            }
        }
    }

    // background traders
    let mut bg = seed::rng(spec.seed, &[1]);
    for k in total_members..spec.n_traders {
        let id = spec.trader_id(k);
        let count = draw_power_law(&mut bg, spec.alpha).min(MAX_BACKGROUND_TRADES);
        for _ in 0..count {
            let t = bg.random_range(0..n_slices);
            let dir = if bg.random_bool(0.5) { 1.0 } else { -1.0 };
            let size = draw_size(&mut bg, spec.round_bias);
            let p = price_at(&mut bg, t);
            push(&mut bg, &id, t, dir * size, p)?;
        }
    }

    trades.sort_by(|a, b| a.timestamp_ms.cmp(&b.timestamp_ms).then_with(|| a.trader_id.cmp(&b.trader_id)));
    Ok(SyntheticMarket {
        grid,
        trades,
        truth: GroundTruth {
            partition: GroupPartition::new(assignment),
            edges: spec.edges.clone(),
            intended: intended.iter().map(|row| row.iter().map(|s| s.code()).collect()).collect(),
        },
    })
}

pub fn write_truth<W: std::io::Write>(out: W, truth: &GroundTruth) -> Result<()> {
    serde_json::to_writer_pretty(out, truth)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::write_trades;

    fn small() -> MarketSpec {
        MarketSpec {
            n_traders: 30,
            group_sizes: vec![5, 5, 5],
            n_days: 5,
            edges: vec![PlantedEdge {
                from: 0,
                to: 1,
                sign: -1,
                fidelity: 1.0,
            }],
            ..MarketSpec::default()
        }
    }

    #[test]
    fn deterministic_bytes() {
        let a = generate_market(&small()).unwrap();
        let b = generate_market(&small()).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        write_trades(&mut x, &a.trades).unwrap();
        write_trades(&mut y, &b.trades).unwrap();
        assert_eq!(x, y);
        let mut other = small();
        other.seed = 1;
        let c = generate_market(&other).unwrap();
        let mut z = Vec::new();
        write_trades(&mut z, &c.trades).unwrap();
        assert_ne!(x, z);
    }

    #[test]
    fn follower_copies_with_sign_map() {
        let m = generate_market(&small()).unwrap();
        let lead = &m.truth.intended[0];
        let follow = &m.truth.intended[1];
        for t in 1..m.grid.len() {
            if m.grid.is_contiguous(t - 1) {
                let want = mapped(State::from_code(lead[t - 1]).unwrap(), -1).code();
                assert_eq!(follow[t], want);
            }
        }
        assert_eq!(m.grid.len(), 35);
    }

    #[test]
    fn perfect_sync_members_share_states() {
        let mut spec = small();
        spec.sync_fidelity = 1.0;
        let m = generate_market(&spec).unwrap();
        let sm = crate::ingest::classify_states(&m.trades, &m.grid, 0.01).unwrap();
        for (id, &label) in &m.truth.partition.assignment {
            let i = sm.index_of(id).unwrap();
            let row: Vec<i8> = sm.states(i).map(State::code).collect();
            assert_eq!(row, m.truth.intended[label as usize - 1]);
        }
    }

    #[test]
    fn invalid_specs() {
        let mut s = small();
        s.group_sizes = vec![20, 20];
        assert!(matches!(generate_market(&s), Err(Error::MarketSpec(_))));
        let mut s = small();
        s.alpha = 1.0;
        assert!(generate_market(&s).is_err());
        let mut s = small();
        s.sync_fidelity = 1.5;
        assert!(generate_market(&s).is_err());
        let mut s = small();
        s.edges.push(PlantedEdge {
            from: 2,
            to: 1,
            sign: 1,
            fidelity: 0.5,
        });
        assert!(generate_market(&s).is_err());
    }

    #[test]
    fn round_lots_dominate_histogram() {
        let mut s = small();
        s.round_bias = 0.6;
        let m = generate_market(&s).unwrap();
        let bins = crate::ingest::trade_size_histogram(&m.trades, 1.0).unwrap();
        let count = |lo: f64| bins.iter().find(|b| b.bin_lower == lo).map_or(0, |b| b.count);
        let neighbours = count(11.0) + count(19.0) + count(21.0) + count(49.0) + count(51.0);
        for lot in [10.0, 20.0, 50.0] {
            assert!(count(lot) > 4 * neighbours.max(1), "lot {lot}: {} vs {neighbours}", count(lot));
        }
    }

    #[test]
    fn power_law_draw_is_at_least_one() {
        let mut rng = seed::rng(3, &[]);
        assert!((0..10_000).all(|_| draw_power_law(&mut rng, 2.5) >= 1));
    }
}
