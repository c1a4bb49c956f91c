use serde::Serialize;

use super::trade::TradeRecord;
use crate::error::{invalid, Result};
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin<F> {
    /// Lower edge of `[lower, lower + width)`.
    pub bin_lower: F,
    pub count: u64,
    /// Fraction of trades with size at or above `bin_lower`.
    pub ccdf: F,
}

/// Histogram of absolute trade sizes. Empty bins are omitted.
pub fn trade_size_histogram<F: Real>(trades: &[TradeRecord<F>], width: F) -> Result<Vec<HistogramBin<F>>> {
    if !(width > F::zero()) || !width.is_finite() {
        return Err(invalid("bin_width", format!("must be positive, got {width}")));
    }
    // A tiny nudge keeps exact multiples of the width in their own bin.
    let eps = F::lit(1e-9);
    let mut keys: Vec<i64> = trades
        .iter()
        .map(|t| (t.signed_volume.abs() / width + eps).floor().to_i64().unwrap_or(i64::MAX))
        .collect();
    keys.sort_unstable();

    let total = F::count(keys.len());
    let mut out = Vec::new();
    let mut at_or_above = keys.len();
    let mut i = 0;
    while i < keys.len() {
        let k = keys[i];
        let run = keys[i..].iter().take_while(|&&x| x == k).count();
        out.push(HistogramBin {
            bin_lower: F::from_i64(k).unwrap() * width,
            count: run as u64,
            ccdf: F::count(at_or_above) / total,
        });
        at_or_above -= run;
        i += run;
    }
    Ok(out)
}

pub fn write_histogram<F: Real, W: std::io::Write>(out: W, bins: &[HistogramBin<F>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["bin_lower", "count", "ccdf"])?;
    for b in bins {
        w.write_record([b.bin_lower.to_string(), b.count.to_string(), b.ccdf.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
