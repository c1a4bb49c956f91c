//! Statistically validated synchronicity and lead-lag networks built from
//! trader-resolved transactions, and order-flow sign forecasting on top of
//! them.
//!
//! Numeric code is generic over [`num::Real`] (`f32` or `f64`); the aliases
//! at the crate root fix the scalar to `f64`.

pub mod community;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod leadlag;
pub mod learn;
pub mod num;
pub mod predict;
pub mod seed;
pub mod stability;
pub mod svn;
pub mod synth;

pub use error::{Error, Result};

pub type TradeRecord = ingest::TradeRecord<f64>;
pub type StateMatrix = ingest::StateMatrix<f64>;
pub type TraderSliceState = ingest::TraderSliceState<f64>;
pub type TailFit = ingest::TailFit<f64>;
pub type ValidatedNetwork = svn::ValidatedNetwork<f64>;
