use std::io::{Read, Write};

use chrono::{TimeZone, Timelike, Utc};

use super::rolling::{DailyCovariate, ForecastRecord};
use crate::error::{Error, Result};
use crate::ingest::SessionConfig;
use crate::num::Real;

pub const FORECAST_COLUMNS: [&str; 7] = [
    "slice_end",
    "window_length",
    "predicted",
    "combined",
    "realized_sign",
    "realized_flow",
    "realized_vwap_sign",
];

/// One line per record and window length.
pub fn write_forecasts<F: Real, W: Write>(out: W, window_lengths: &[usize], records: &[ForecastRecord<F>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FORECAST_COLUMNS)?;
    for r in records {
        for (len, p) in window_lengths.iter().zip(&r.predictions) {
            w.write_record([
                r.slice_end_ms.to_string(),
                len.to_string(),
                p.to_string(),
                r.combined.to_string(),
                r.realized_sign.to_string(),
                r.realized_flow.to_string(),
                r.realized_vwap_sign.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, k: usize, line: u64) -> Result<T> {
    rec.get(k)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::Domain(format!("forecast line {line}: bad `{}`", FORECAST_COLUMNS[k])))
}

/// Inverse of [`write_forecasts`]. Day and hour are recovered from the slice
/// end in the session's zone. Returns the window lengths and the records.
pub fn read_forecasts<F: Real, R: Read>(input: R, session: &SessionConfig) -> Result<(Vec<usize>, Vec<ForecastRecord<F>>)> {
    let tz = session.tz()?;
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
    if header != FORECAST_COLUMNS {
        return Err(Error::Header(header.join(",")));
    }
    let mut windows: Vec<usize> = Vec::new();
    let mut records: Vec<ForecastRecord<F>> = Vec::new();
    let mut filled = 0usize;
    for (n, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = n as u64 + 2;
        let end: i64 = field(&rec, 0, line)?;
        let len: usize = field(&rec, 1, line)?;
        let pred: i8 = field(&rec, 2, line)?;
        let start_new = records.last().is_none_or(|r| r.slice_end_ms != end);
        if start_new {
            if let Some(prev) = records.last() {
                if prev.predictions.len() != windows.len() {
                    return Err(Error::Domain(format!("forecast line {line}: incomplete record before it")));
                }
            }
            let local = Utc
                .timestamp_millis_opt(end - session.slice_ms())
                .single()
                .ok_or_else(|| Error::Domain(format!("forecast line {line}: bad timestamp")))?
                .with_timezone(&tz);
            let vwap = rec.get(6).unwrap_or("").trim();
            records.push(ForecastRecord {
                slice_end_ms: end,
                day: local.date_naive(),
                hour: local.hour() as u8,
                predictions: Vec::new(),
                combined: field(&rec, 3, line)?,
                realized_sign: field(&rec, 4, line)?,
                realized_flow: F::lit(field::<f64>(&rec, 5, line)?),
                realized_vwap_sign: if vwap.is_empty() { None } else { Some(field(&rec, 6, line)?) },
            });
            filled = 0;
        }
        if records.len() == 1 {
            windows.push(len);
        } else if windows.get(filled) != Some(&len) {
            return Err(Error::Domain(format!("forecast line {line}: window lengths differ between records")));
        }
        filled += 1;
        records.last_mut().unwrap().predictions.push(pred);
    }
    if records.last().is_some_and(|r| r.predictions.len() != windows.len()) {
        return Err(Error::Domain("forecast file ends with an incomplete record".into()));
    }
    Ok((windows, records))
}

pub fn write_covariates<F: Real, W: Write>(out: W, rows: &[DailyCovariate<F>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["day", "r_h", "beta"])?;
    for r in rows {
        w.write_record([
            r.day.to_string(),
            r.r_h.map(|x| x.to_string()).unwrap_or_default(),
            r.beta.map(|x| x.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
