use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use leadlag_cli::{RunConfig, Workspace};

#[derive(Parser)]
#[command(name = "leadlag", version, about = "Synchronicity and lead-lag networks of traders, and order-flow forecasts built on them")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory holding one subdirectory per stage.
    #[arg(long, short, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the config's run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Parse trades and classify trader states per slice.
    Ingest,
    /// Validate the synchronicity network over the whole period.
    Svn,
    /// Cluster the validated network.
    Communities,
    /// Validate lead-lag links between groups.
    Leadlag,
    /// Rolling partitions, ARI, lead-lag persistence and river data.
    Stability,
    /// Walk-forward forecasts of flow sign and VWAP change.
    Forecast,
    /// Skill statistics of the forecasts.
    Evaluate,
    /// Generate a synthetic market with planted groups.
    Synth,
    /// All stages from ingest to evaluate, plus a manifest.
    Pipeline,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Svn => "svn",
            Command::Communities => "communities",
            Command::Leadlag => "leadlag",
            Command::Stability => "stability",
            Command::Forecast => "forecast",
            Command::Evaluate => "evaluate",
            Command::Synth => "synth",
            Command::Pipeline => "pipeline",
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("setting up worker threads")?;
    }
    Workspace::new(cfg, cli.out).run(cli.command.name())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
