//! Walk-forward forecasting of the next slice's order-flow sign and VWAP
//! change from group states.

pub mod features;
pub mod io;
pub mod rolling;

pub use features::{build_predictors, flow_sign_targets, vwap_change_targets, vwap_series, HOUR_COLUMN};
pub use io::{read_forecasts, write_covariates, write_forecasts, FORECAST_COLUMNS};
pub use rolling::{majority_vote, rolling_forecast, rolling_forecast_multi, CalibrationSchedule, DailyCovariate, ForecastConfig, ForecastRecord, ForecastRun, MarketData, TargetKind};
