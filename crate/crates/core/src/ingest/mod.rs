//! Trade parsing, the session time grid, per-slice trader states and
//! descriptive statistics of activity.

pub mod grid;
pub mod histogram;
pub mod io;
pub mod state;
pub mod tail;
pub mod trade;

pub use grid::{SessionConfig, Slice, TimeGrid};
pub use histogram::{trade_size_histogram, write_histogram, HistogramBin};
pub use io::{read_state_matrix, write_states, write_volumes};
pub use state::{classify_states, filter_active, validate_rho0, State, StateMatrix, TraderSliceState, DEFAULT_RHO0};
pub use tail::{fit_tail_exponent, hurwitz_zeta, TailFit};
pub use trade::{parse_timestamp, parse_trades, write_trades, ParsedTrades, Reject, TimestampFormat, TradeFormat, TradeRecord, TraderId};
