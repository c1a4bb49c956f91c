//! Skill statistics of a forecast run.

pub mod report;
pub mod stats;

pub use report::{accuracy, evaluate, evaluate_with, hourly_condition, performance_series, write_performance, Accuracy, EvalReport, HourRow, HourlyReport, PerformanceSeries};
pub use stats::{chou_chu_test, location_tests, midranks, roc_auc, ChouChuMethod, TestResult, MIN_BINARY, MIN_LOCATION, WILCOXON_EXACT_MAX};
