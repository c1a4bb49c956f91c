//! Run configuration, read from a TOML file. Every key is optional; missing
//! keys take the defaults below.
//!
//! ```toml
//! inputs = ["trades.csv"]
//! instrument = "EURUSD"
//! seed = 0
//!
//! [session]
//! slice_minutes = 60
//! session_start = "09:00:00"
//! session_end = "16:00:00"
//! timezone = "Europe/London"
//! include_weekends = false
//!
//! [states]
//! rho0 = 0.01
//! top_n = 500
//! min_trades = 100
//!
//! [svn]
//! p0 = 0.05
//!
//! [communities]
//! restarts = 10
//!
//! [forecast]
//! window_lengths = [45, 50, 55, 60, 65, 70, 75, 80, 85, 90]
//! recalibrate_every = 1
//! lag_depth = 1
//! n_trees = 500
//! min_node = 5
//! covariates = true
//! targets = ["flow", "vwap"]
//!
//! [stability]
//! window_days = 90
//! step_days = 1
//!
//! [evaluate]
//! method = "block_permutation"   # or "hac"
//! permutations = 10000
//! min_hour_obs = 30
//! ```
//!
//! A `[synth]` table holding the generator's market spec is read by the
//! `synth` subcommand.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use leadlag_core::eval::ChouChuMethod;
use leadlag_core::ingest::{validate_rho0, SessionConfig};
use leadlag_core::learn::ForestConfig;
use leadlag_core::predict::{CalibrationSchedule, ForecastConfig, TargetKind};
use leadlag_core::svn::FdrConfig;
use leadlag_core::synth::MarketSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatesConfig {
    pub rho0: f64,
    pub top_n: usize,
    pub min_trades: u64,
}

impl Default for StatesConfig {
    fn default() -> Self {
        StatesConfig {
            rho0: 0.01,
            top_n: 500,
            min_trades: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvnConfig {
    pub p0: f64,
}

impl Default for SvnConfig {
    fn default() -> Self {
        SvnConfig { p0: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommunityConfig {
    pub restarts: usize,
}

impl Default for CommunityConfig {
    fn default() -> Self {
        CommunityConfig { restarts: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSection {
    pub window_lengths: Vec<usize>,
    pub recalibrate_every: usize,
    pub lag_depth: usize,
    pub n_trees: usize,
    pub mtry: Option<usize>,
    pub min_node: usize,
    pub covariates: bool,
    pub targets: Vec<TargetKind>,
}

impl Default for ForecastSection {
    fn default() -> Self {
        let s = CalibrationSchedule::default();
        let f = ForestConfig::default();
        ForecastSection {
            window_lengths: s.window_lengths,
            recalibrate_every: s.recalibrate_every,
            lag_depth: 1,
            n_trees: f.n_trees,
            mtry: f.mtry,
            min_node: f.min_node,
            covariates: true,
            targets: vec![TargetKind::Flow, TargetKind::Vwap],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    /// Defaults to the longest forecast window.
    pub window_days: Option<usize>,
    pub step_days: usize,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            window_days: None,
            step_days: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    BlockPermutation,
    Hac,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub method: TestMethod,
    pub permutations: usize,
    pub min_hour_obs: usize,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            method: TestMethod::BlockPermutation,
            permutations: 10_000,
            min_hour_obs: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    pub instrument: Option<String>,
    pub seed: u64,
    pub session: SessionConfig,
    pub states: StatesConfig,
    pub svn: SvnConfig,
    pub communities: CommunityConfig,
    pub forecast: ForecastSection,
    pub stability: StabilityConfig,
    pub evaluate: EvaluateConfig,
    pub synth: Option<MarketSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            inputs: Vec::new(),
            instrument: None,
            seed: 0,
            session: SessionConfig::default(),
            states: StatesConfig::default(),
            svn: SvnConfig::default(),
            communities: CommunityConfig::default(),
            forecast: ForecastSection::default(),
            stability: StabilityConfig::default(),
            evaluate: EvaluateConfig::default(),
            synth: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("parsing config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("in config {}", path.display()))?;
        // Relative input paths are taken from the config file's directory.
        let base = path.parent().unwrap_or(Path::new(""));
        for p in &mut cfg.inputs {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.session.validate()?;
        validate_rho0(self.states.rho0)?;
        if self.states.top_n == 0 {
            bail!("states.top_n must be at least 1");
        }
        self.forecast_config().validate()?;
        if self.forecast.targets.is_empty() {
            bail!("forecast.targets is empty");
        }
        if self.forecast.n_trees == 0 {
            bail!("forecast.n_trees must be at least 1");
        }
        if self.stability.step_days == 0 || self.stability.window_days == Some(0) {
            bail!("stability window and step must be positive");
        }
        if self.evaluate.permutations == 0 {
            bail!("evaluate.permutations must be at least 1");
        }
        if let Some(spec) = &self.synth {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn fdr(&self) -> FdrConfig {
        FdrConfig { p0: self.svn.p0 }
    }

    pub fn forecast_config(&self) -> ForecastConfig {
        ForecastConfig {
            schedule: CalibrationSchedule {
                window_lengths: self.forecast.window_lengths.clone(),
                recalibrate_every: self.forecast.recalibrate_every,
            },
            rho0: self.states.rho0,
            fdr: self.fdr(),
            top_n: self.states.top_n,
            min_trades: self.states.min_trades,
            lag_depth: self.forecast.lag_depth,
            forest: ForestConfig {
                n_trees: self.forecast.n_trees,
                mtry: self.forecast.mtry,
                min_node: self.forecast.min_node,
            },
            restarts: self.communities.restarts,
            covariates: self.forecast.covariates,
        }
    }

    pub fn stability_window(&self) -> usize {
        self.stability
            .window_days
            .unwrap_or_else(|| self.forecast.window_lengths.last().copied().unwrap_or(90))
    }

    pub fn test_method(&self, seed: u64) -> ChouChuMethod {
        match self.evaluate.method {
            TestMethod::BlockPermutation => ChouChuMethod::BlockPermutation {
                permutations: self.evaluate.permutations,
                seed,
            },
            TestMethod::Hac => ChouChuMethod::Hac,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_file() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.states.rho0, 0.01);
        assert_eq!(c.svn.p0, 0.05);
        assert_eq!(c.states.top_n, 500);
        assert_eq!(c.states.min_trades, 100);
        assert_eq!(c.forecast.window_lengths, vec![45, 50, 55, 60, 65, 70, 75, 80, 85, 90]);
        assert_eq!(c.session.slice_minutes, 60);
        assert_eq!(c.session.timezone, "Europe/London");
        assert_eq!(c.stability_window(), 90);
    }

    #[test]
    fn rho0_outside_band_rejected() {
        let err = RunConfig::from_toml("[states]\nrho0 = 0.5\n").unwrap_err();
        assert!(format!("{err:#}").contains("rho0"), "{err:#}");
        assert!(RunConfig::from_toml("[states]\nrho0 = 0.1\n").is_ok());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("[svn]\nq0 = 0.1\n").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig::default();
        c.synth = Some(MarketSpec::default());
        c.instrument = Some("EURUSD".into());
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn documented_example_parses() {
        let doc: String = include_str!("config.rs")
            .lines()
            .skip_while(|l| !l.starts_with("//! ```toml"))
            .skip(1)
            .take_while(|l| !l.starts_with("//! ```"))
            .map(|l| l.trim_start_matches("//!").trim_start())
            .collect::<Vec<_>>()
            .join("\n");
        let c = RunConfig::from_toml(&doc).unwrap();
        assert_eq!(c.inputs, vec![PathBuf::from("trades.csv")]);
        assert_eq!(c.evaluate.method, TestMethod::BlockPermutation);
    }
}
