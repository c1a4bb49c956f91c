use std::io::Write;

use serde::{Deserialize, Serialize};

use super::fdr::{bh_threshold, FdrConfig};
use super::scan::{scan, Hit, StateBits};
use crate::error::{Error, Result};
use crate::ingest::{State, StateMatrix, TraderId};
use crate::num::Real;

/// Minimum window length accepted by [`build_svn`].
pub const MIN_SLICES: usize = 50;

/// One tested co-occurrence hypothesis between two traders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkCandidate<F> {
    pub i: TraderId,
    pub j: TraderId,
    pub state_pair: (State, State),
    pub co_count: u64,
    pub n_i: u64,
    pub n_j: u64,
    pub t: u64,
    pub p_value: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedNetwork<F> {
    /// Traders carrying at least one validated link, sorted.
    pub nodes: Vec<TraderId>,
    /// Sorted by (i, j, state_pair).
    pub edges: Vec<LinkCandidate<F>>,
    /// `[start, end)` of the window in epoch ms.
    pub window: Option<(i64, i64)>,
    pub t: u64,
    pub p0: f64,
    pub threshold: F,
    /// Size of the tested family.
    pub n_tests: u64,
}

impl<F: Real> ValidatedNetwork<F> {
    fn empty(window: Option<(i64, i64)>, t: u64, p0: f64) -> Self {
        ValidatedNetwork {
            nodes: Vec::new(),
            edges: Vec::new(),
            window,
            t,
            p0,
            threshold: F::zero(),
            n_tests: 0,
        }
    }
}

/// Co-occurrence count of `state_pair` between traders `i` and `j`,
/// returned as `(x, n_i, n_j, T)`. Inactivity never matches.
pub fn count_cooccurrences<F: Real>(
    matrix: &StateMatrix<F>,
    i: &TraderId,
    j: &TraderId,
    state_pair: (State, State),
) -> Result<(u64, u64, u64, u64)> {
    let a = matrix.index_of(i).ok_or_else(|| Error::UnknownTrader(i.to_string()))?;
    let b = matrix.index_of(j).ok_or_else(|| Error::UnknownTrader(j.to_string()))?;
    let t = matrix.n_slices() as u64;
    let (si, sj) = state_pair;
    if si == State::Inactive || sj == State::Inactive {
        return Err(Error::Domain("inactive state is never tested".into()));
    }
    let (mut x, mut ni, mut nj) = (0, 0, 0);
    for (ca, cb) in matrix.row(a).iter().zip(matrix.row(b)) {
        ni += u64::from(ca.sigma == si);
        nj += u64::from(cb.sigma == sj);
        x += u64::from(ca.sigma == si && cb.sigma == sj);
    }
    Ok((x, ni, nj, t))
}

/// Validate synchronous co-occurrences of all trader pairs and all nine
/// active state pairs, under Benjamini–Hochberg control at `cfg.p0`.
///
/// Pairs where either marginal count is zero cannot be tested and are left
/// out of the family size.
pub fn build_svn<F: Real>(matrix: &StateMatrix<F>, cfg: &FdrConfig) -> Result<ValidatedNetwork<F>> {
    cfg.validate()?;
    let t = matrix.n_slices();
    if t < MIN_SLICES {
        return Err(Error::WindowTooShort { got: t, need: MIN_SLICES });
    }
    let window = matrix.grid().span_ms();
    if matrix.n_traders() < 2 {
        return Ok(ValidatedNetwork::empty(window, t as u64, cfg.p0));
    }
    let bits: Vec<StateBits> = (0..matrix.n_traders()).map(|i| StateBits::new(matrix.states(i), t)).collect();
    let p0 = F::lit(cfg.p0);
    let (hits, tested) = scan(&bits, &bits, t as u64, p0, false);
    let (threshold, kept) = apply_bh(hits, tested, p0);

    let edges: Vec<LinkCandidate<F>> = kept
        .into_iter()
        .map(|h| LinkCandidate {
            i: matrix.traders()[h.i].clone(),
            j: matrix.traders()[h.j].clone(),
            state_pair: (State::ACTIVE[h.si], State::ACTIVE[h.sj]),
            co_count: h.x,
            n_i: h.ni,
            n_j: h.nj,
            t: t as u64,
            p_value: h.p,
        })
        .collect();
    let mut nodes: Vec<TraderId> = edges.iter().flat_map(|e| [e.i.clone(), e.j.clone()]).collect();
    nodes.sort();
    nodes.dedup();
    Ok(ValidatedNetwork {
        nodes,
        edges,
        window,
        t: t as u64,
        p0: cfg.p0,
        threshold,
        n_tests: tested,
    })
}

/// BH over a family of `m` tests of which `hits` are the ones with p ≤ p0.
/// Keeps the input order of the surviving hits.
pub(crate) fn apply_bh<F: Real>(hits: Vec<Hit<F>>, m: u64, p0: F) -> (F, Vec<Hit<F>>) {
    if m == 0 {
        return (F::zero(), Vec::new());
    }
    let mut ps: Vec<F> = hits.iter().map(|h| h.p).collect();
    ps.sort_by(|a, b| a.partial_cmp(b).expect("p-values are not NaN"));
    let threshold = bh_threshold(&ps, m, p0);
    let kept = if threshold > F::zero() {
        hits.into_iter().filter(|h| h.p <= threshold).collect()
    } else {
        Vec::new()
    };
    (threshold, kept)
}

pub const EDGE_COLUMNS: [&str; 6] = ["i", "j", "state_i", "state_j", "co_count", "p_value"];

pub fn write_edges<F: Real, W: Write>(out: W, net: &ValidatedNetwork<F>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EDGE_COLUMNS)?;
    for e in &net.edges {
        w.write_record([
            e.i.to_string(),
            e.j.to_string(),
            e.state_pair.0.code().to_string(),
            e.state_pair.1.code().to_string(),
            e.co_count.to_string(),
            e.p_value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Summary written next to the edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkMeta {
    pub window: Option<(i64, i64)>,
    pub t: u64,
    pub p0: f64,
    pub threshold: f64,
    pub m: u64,
    pub n_nodes: usize,
    pub n_edges: usize,
}

impl<F: Real> From<&ValidatedNetwork<F>> for NetworkMeta {
    fn from(n: &ValidatedNetwork<F>) -> Self {
        NetworkMeta {
            window: n.window,
            t: n.t,
            p0: n.p0,
            threshold: n.threshold.to_f64_lossy(),
            m: n.n_tests,
            n_nodes: n.nodes.len(),
            n_edges: n.edges.len(),
        }
    }
}

/// Parse an edge list written by [`write_edges`]. Marginal counts are not
/// stored and read back as zero.
pub fn read_edges<F: Real, R: std::io::Read>(input: R, meta: &NetworkMeta) -> Result<ValidatedNetwork<F>> {
    let mut rd = csv::Reader::from_reader(input);
    let mut edges = Vec::new();
    let state = |s: &str| -> Result<State> {
        s.parse::<i8>()
            .ok()
            .and_then(State::from_code)
            .ok_or_else(|| Error::Domain(format!("bad state `{s}`")))
    };
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != EDGE_COLUMNS.len() {
            return Err(Error::Schema { expected: EDGE_COLUMNS.len(), got: rec.len() });
        }
        edges.push(LinkCandidate {
            i: TraderId::new(&rec[0]),
            j: TraderId::new(&rec[1]),
            state_pair: (state(&rec[2])?, state(&rec[3])?),
            co_count: rec[4].parse().map_err(|_| Error::Domain(format!("bad count `{}`", &rec[4])))?,
            n_i: 0,
            n_j: 0,
            t: meta.t,
            p_value: rec[5]
                .parse::<f64>()
                .ok()
                .and_then(F::from_f64)
                .ok_or_else(|| Error::Domain(format!("bad p-value `{}`", &rec[5])))?,
        });
    }
    let mut nodes: Vec<TraderId> = edges.iter().flat_map(|e: &LinkCandidate<F>| [e.i.clone(), e.j.clone()]).collect();
    nodes.sort();
    nodes.dedup();
    Ok(ValidatedNetwork {
        nodes,
        edges,
        window: meta.window,
        t: meta.t,
        p0: meta.p0,
        threshold: F::lit(meta.threshold),
        n_tests: meta.m,
    })
}
