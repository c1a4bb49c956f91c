use std::fmt;
use std::io::Read;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Opaque client identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TraderId(pub String);

impl TraderId {
    pub fn new(id: impl Into<String>) -> Self {
        TraderId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TraderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TraderId {
    fn from(s: &str) -> Self {
        TraderId(s.to_owned())
    }
}

/// One client transaction. `signed_volume` is in base-currency units, positive
/// for a buy; `price` is in quote units.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeRecord<F> {
    pub trader_id: TraderId,
    /// Milliseconds since the Unix epoch, UTC.
    pub timestamp_ms: i64,
    pub instrument: String,
    pub signed_volume: F,
    pub price: F,
}

impl<F: Real> TradeRecord<F> {
    pub fn new(
        trader_id: impl Into<String>,
        timestamp_ms: i64,
        instrument: impl Into<String>,
        signed_volume: F,
        price: F,
    ) -> Result<Self> {
        let rec = TradeRecord {
            trader_id: TraderId(trader_id.into()),
            timestamp_ms,
            instrument: instrument.into(),
            signed_volume,
            price,
        };
        rec.validate().map_err(Error::Domain)?;
        Ok(rec)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.trader_id.0.is_empty() {
            return Err("empty trader_id".into());
        }
        if self.instrument.is_empty() {
            return Err("empty instrument".into());
        }
        if !self.signed_volume.is_finite() || self.signed_volume == F::zero() {
            return Err(format!("signed_volume must be finite and non-zero, got {}", self.signed_volume));
        }
        if !self.price.is_finite() || self.price <= F::zero() {
            return Err(format!("price must be positive, got {}", self.price));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestampFormat {
    /// Integers are epoch milliseconds, anything else is parsed as ISO-8601.
    #[default]
    Auto,
    Iso8601,
    EpochMillis,
}

/// How to read a trade CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TradeFormat {
    pub delimiter: u8,
    pub timestamp: TimestampFormat,
}

impl Default for TradeFormat {
    fn default() -> Self {
        TradeFormat {
            delimiter: b',',
            timestamp: TimestampFormat::Auto,
        }
    }
}

/// A row that could not be turned into a [`TradeRecord`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reject {
    /// 1-based line number in the input, header being line 1.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct ParsedTrades<F> {
    pub records: Vec<TradeRecord<F>>,
    pub rejects: Vec<Reject>,
}

pub const TRADE_COLUMNS: [&str; 5] = ["trader_id", "timestamp", "instrument", "signed_volume", "price"];

/// Parse a timestamp given either as epoch milliseconds or ISO-8601. Strings
/// without an offset are taken as UTC.
pub fn parse_timestamp(raw: &str, format: TimestampFormat) -> std::result::Result<i64, String> {
    let raw = raw.trim();
    let is_integer = {
        let digits = raw.strip_prefix('-').unwrap_or(raw);
        !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
    };
    match format {
        TimestampFormat::EpochMillis => raw.parse::<i64>().map_err(|e| format!("bad epoch ms `{raw}`: {e}")),
        TimestampFormat::Auto if is_integer => raw.parse::<i64>().map_err(|e| format!("bad epoch ms `{raw}`: {e}")),
        _ => {
            if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
                return Ok(dt.timestamp_millis());
            }
            for pattern in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
                if let Ok(naive) = NaiveDateTime::parse_from_str(raw, pattern) {
                    return Ok(naive.and_utc().timestamp_millis());
                }
            }
            Err(format!("unparseable timestamp `{raw}`"))
        }
    }
}

/// Read trades from CSV. The header must name the five trade fields (any
/// order, extra columns ignored). Rows violating a record invariant are
/// reported in `rejects`; more than 10% rejected rows is fatal. Output is
/// sorted by timestamp, stable with respect to file order.
pub fn parse_trades<F: Real, R: Read>(input: R, format: &TradeFormat) -> Result<ParsedTrades<F>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let headers = reader.headers().map_err(|e| Error::Header(e.to_string()))?.clone();
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(TRADE_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Header(format!("missing column `{name}` in header {:?}", headers)))?;
    }

    let mut records = Vec::new();
    let mut rejects = Vec::new();
    let mut total = 0usize;
    for (row_no, row) in reader.records().enumerate() {
        total += 1;
        let line = row_no as u64 + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                rejects.push(Reject { line, reason: e.to_string() });
                continue;
            }
        };
        match parse_row::<F>(&row, &idx, format) {
            Ok(rec) => records.push(rec),
            Err(reason) => rejects.push(Reject { line, reason }),
        }
    }

    if total > 0 && rejects.len() * 10 > total {
        return Err(Error::TooManyRejects {
            rejected: rejects.len(),
            total,
            first: rejects.first().map(|r| format!("line {}: {}", r.line, r.reason)).unwrap_or_default(),
        });
    }

    records.sort_by_key(|r| r.timestamp_ms);
    Ok(ParsedTrades { records, rejects })
}

fn parse_row<F: Real>(row: &csv::StringRecord, idx: &[usize; 5], format: &TradeFormat) -> std::result::Result<TradeRecord<F>, String> {
    let field = |k: usize| row.get(idx[k]).ok_or_else(|| format!("missing field `{}`", TRADE_COLUMNS[k]));
    let trader_id = field(0)?.to_owned();
    let timestamp_ms = parse_timestamp(field(1)?, format.timestamp)?;
    let instrument = field(2)?.to_owned();
    let number = |k: usize| -> std::result::Result<F, String> {
        let raw = field(k)?;
        let v: f64 = raw.parse().map_err(|_| format!("`{}` is not a number: `{raw}`", TRADE_COLUMNS[k]))?;
        F::from_f64(v).ok_or_else(|| format!("`{raw}` not representable"))
    };
    let rec = TradeRecord {
        trader_id: TraderId(trader_id),
        timestamp_ms,
        instrument,
        signed_volume: number(3)?,
        price: number(4)?,
    };
    rec.validate()?;
    Ok(rec)
}

/// Write trades in the canonical input format with epoch-ms timestamps.
pub fn write_trades<F: Real, W: std::io::Write>(out: W, trades: &[TradeRecord<F>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRADE_COLUMNS)?;
    for t in trades {
        w.write_record([
            t.trader_id.as_str(),
            &t.timestamp_ms.to_string(),
            &t.instrument,
            &t.signed_volume.to_string(),
            &t.price.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
