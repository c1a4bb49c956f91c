//! CSV persistence of a [`StateMatrix`]: a wide `states.csv` of state codes
//! and a long `volumes.csv` holding V, G and trade counts of active cells.

use std::collections::HashMap;
use std::io::{Read, Write};

use super::grid::TimeGrid;
use super::state::{State, StateMatrix, TraderSliceState};
use super::trade::TraderId;
use crate::error::{Error, Result};
use crate::num::Real;

pub fn write_states<F: Real, W: Write>(out: W, m: &StateMatrix<F>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["trader_id".to_owned()];
    header.extend((0..m.n_slices()).map(|t| t.to_string()));
    w.write_record(&header)?;
    for (id, row) in m.rows() {
        let mut rec = vec![id.to_string()];
        rec.extend(row.iter().map(|c| c.sigma.code().to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_volumes<F: Real, W: Write>(out: W, m: &StateMatrix<F>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["trader_id", "slice", "v", "g", "trades"])?;
    for (id, row) in m.rows() {
        for (t, c) in row.iter().enumerate().filter(|(_, c)| c.trades > 0) {
            w.write_record([id.to_string(), t.to_string(), c.v.to_string(), c.g.to_string(), c.trades.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rebuild a matrix from the two files written above.
pub fn read_state_matrix<F: Real, R1: Read, R2: Read>(grid: TimeGrid, states: R1, volumes: R2) -> Result<StateMatrix<F>> {
    let t_len = grid.len();
    let mut rows: Vec<(TraderId, Vec<TraderSliceState<F>>)> = Vec::new();
    let mut rd = csv::Reader::from_reader(states);
    let width = rd.headers()?.len();
    if width != t_len + 1 {
        return Err(Error::Schema { expected: t_len + 1, got: width });
    }
    for rec in rd.records() {
        let rec = rec?;
        let id = TraderId::new(&rec[0]);
        let mut row = Vec::with_capacity(t_len);
        for field in rec.iter().skip(1) {
            let code: i8 = field.trim().parse().map_err(|_| Error::Domain(format!("bad state `{field}`")))?;
            let sigma = State::from_code(code).ok_or_else(|| Error::Domain(format!("bad state `{field}`")))?;
            row.push(TraderSliceState { sigma, ..TraderSliceState::default() });
        }
        rows.push((id, row));
    }

    let index: HashMap<TraderId, usize> = rows.iter().enumerate().map(|(k, (id, _))| (id.clone(), k)).collect();
    let mut rd = csv::Reader::from_reader(volumes);
    for rec in rd.records() {
        let rec = rec?;
        let k = *index.get(&TraderId::new(&rec[0])).ok_or_else(|| Error::UnknownTrader(rec[0].to_owned()))?;
        let t: usize = rec[1].parse().map_err(|_| Error::Domain(format!("bad slice `{}`", &rec[1])))?;
        let num = |s: &str| -> Result<F> {
            s.parse::<f64>()
                .ok()
                .and_then(F::from_f64)
                .ok_or_else(|| Error::Domain(format!("bad number `{s}`")))
        };
        let cell = rows[k].1.get_mut(t).ok_or_else(|| Error::Domain(format!("slice {t} outside grid")))?;
        cell.v = num(&rec[2])?;
        cell.g = num(&rec[3])?;
        cell.trades = rec[4].parse().map_err(|_| Error::Domain(format!("bad trade count `{}`", &rec[4])))?;
    }
    StateMatrix::from_rows(grid, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::grid::SessionConfig;
    use crate::ingest::state::classify_states;
    use crate::ingest::trade::TradeRecord;

    #[test]
    fn round_trip_is_exact() {
        let grid = TimeGrid::contiguous(SessionConfig::default(), 0, 4).unwrap();
        let trades = vec![
            TradeRecord::new("b", 10, "EURUSD", 0.1 + 0.2, 1.1).unwrap(),
            TradeRecord::new("b", 20, "EURUSD", -1.0 / 3.0, 1.1).unwrap(),
            TradeRecord::new("a", 3_600_001, "EURUSD", 7.0, 1.1).unwrap(),
            TradeRecord::new("a", 3 * 3_600_000, "EURUSD", -2.0, 1.1).unwrap(),
        ];
        let m = classify_states(&trades, &grid, 0.01).unwrap();
        let (mut s, mut v) = (Vec::new(), Vec::new());
        write_states(&mut s, &m).unwrap();
        write_volumes(&mut v, &m).unwrap();
        let back = read_state_matrix::<f64, _, _>(grid, s.as_slice(), v.as_slice()).unwrap();
        assert_eq!(back, m);
        assert!(String::from_utf8(s).unwrap().starts_with("trader_id,0,1,2,3\na,0,1,0,-1\n"));
    }
}
