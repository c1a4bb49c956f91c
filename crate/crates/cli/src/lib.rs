//! Command-line driver: configuration and the file-based pipeline stages.

pub mod config;
pub mod stages;

pub use config::RunConfig;
pub use stages::{output_checksums, stage_seed, Workspace, STAGES};
