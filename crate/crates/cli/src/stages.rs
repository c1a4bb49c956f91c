//! Each stage reads the files of the stages before it from the output
//! directory and writes its own subdirectory.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use leadlag_core::community::{detect_communities_with, project_weighted, read_partition, write_partition, GroupPartition};
use leadlag_core::eval::{evaluate_with, performance_series, write_performance};
use leadlag_core::ingest::{
    classify_states, fit_tail_exponent, parse_trades, read_state_matrix, trade_size_histogram, write_histogram, write_states,
    write_trades, write_volumes, StateMatrix, TimeGrid, TradeFormat, TradeRecord,
};
use leadlag_core::leadlag::{aggregate_groups, build_leadlag, expand_trader_leadlag, write_adjacency, write_leadlag};
use leadlag_core::predict::{
    read_forecasts, rolling_forecast_multi, vwap_series, write_covariates, write_forecasts, DailyCovariate, MarketData,
};
use leadlag_core::seed;
use leadlag_core::stability::{rolling_stability, write_river, write_series, RollingConfig};
use leadlag_core::svn::{build_svn, read_edges, write_edges, NetworkMeta};
use leadlag_core::synth::{generate_market, write_truth, MarketSpec};

use crate::config::RunConfig;

/// Stages in pipeline order.
pub const STAGES: [&str; 7] = ["ingest", "svn", "communities", "leadlag", "stability", "forecast", "evaluate"];

/// Seed of a stage, derived from the run seed and the stage's position.
pub fn stage_seed(run_seed: u64, stage: &str) -> u64 {
    let k = STAGES.iter().position(|s| *s == stage).expect("known stage");
    seed::derive(run_seed, &[k as u64])
}

pub struct Workspace {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    serde_json::from_reader(r).with_context(|| format!("parsing {}", path.display()))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Workspace {
    pub fn new(cfg: RunConfig, out: impl Into<PathBuf>) -> Self {
        Workspace { cfg, out: out.into() }
    }

    fn path(&self, stage: &str, file: &str) -> PathBuf {
        self.out.join(stage).join(file)
    }

    /// Path of an upstream artifact, or an error naming the stage to run.
    fn need(&self, stage: &str, file: &str) -> Result<PathBuf> {
        let p = self.path(stage, file);
        if !p.is_file() {
            bail!("missing {} (produced by the `{stage}` stage; run it first)", p.display());
        }
        Ok(p)
    }

    fn open(&self, stage: &str, file: &str) -> Result<BufReader<File>> {
        let p = self.need(stage, file)?;
        Ok(BufReader::new(File::open(&p).with_context(|| format!("opening {}", p.display()))?))
    }

    pub fn run(&self, stage: &str) -> Result<()> {
        match stage {
            "synth" => self.synth(),
            "ingest" => self.ingest(),
            "svn" => self.svn(),
            "communities" => self.communities(),
            "leadlag" => self.leadlag(),
            "stability" => self.stability(),
            "forecast" => self.forecast(),
            "evaluate" => self.evaluate(),
            "pipeline" => self.pipeline(),
            other => bail!("unknown stage `{other}`"),
        }
        .with_context(|| format!("stage `{stage}` failed"))
    }

    pub fn synth(&self) -> Result<()> {
        let spec = self.cfg.synth.clone().unwrap_or_default();
        let market = generate_market(&spec)?;
        let mut w = create(&self.path("synth", "trades.csv"))?;
        write_trades(&mut w, &market.trades)?;
        w.flush()?;
        let mut w = create(&self.path("synth", "truth.json"))?;
        write_truth(&mut w, &market.truth)?;
        w.flush()?;
        Ok(())
    }

    fn input_paths(&self) -> Result<Vec<PathBuf>> {
        if self.cfg.inputs.is_empty() {
            Ok(vec![self.need("synth", "trades.csv")?])
        } else {
            Ok(self.cfg.inputs.clone())
        }
    }

    pub fn ingest(&self) -> Result<()> {
        let mut trades: Vec<TradeRecord<f64>> = Vec::new();
        let mut rejects: Vec<(String, u64, String)> = Vec::new();
        for path in self.input_paths()? {
            let f = File::open(&path).with_context(|| format!("opening input {}", path.display()))?;
            let parsed = parse_trades::<f64, _>(BufReader::new(f), &TradeFormat::default())
                .with_context(|| format!("reading {}", path.display()))?;
            let name = path.display().to_string();
            rejects.extend(parsed.rejects.into_iter().map(|r| (name.clone(), r.line, r.reason)));
            trades.extend(parsed.records);
        }
        let instrument = match &self.cfg.instrument {
            Some(i) => i.clone(),
            None => {
                let mut seen: Vec<&str> = trades.iter().map(|t| t.instrument.as_str()).collect();
                seen.sort_unstable();
                seen.dedup();
                match seen.as_slice() {
                    [] => bail!("no valid trades in the inputs"),
                    [one] => one.to_string(),
                    many => bail!("inputs hold {} instruments ({}); set `instrument`", many.len(), many.join(", ")),
                }
            }
        };
        let total = trades.len();
        trades.retain(|t| t.instrument == instrument);
        let other_instruments = total - trades.len();
        if trades.is_empty() {
            bail!("no trades for instrument {instrument}");
        }

        let grid = TimeGrid::covering(self.cfg.session.clone(), trades.iter().map(|t| t.timestamp_ms))?;
        let outside = trades.iter().filter(|t| grid.slice_of(t.timestamp_ms).is_none()).count();
        let matrix = classify_states(&trades, &grid, self.cfg.states.rho0)?;
        let vwap = vwap_series(&trades, &grid);

        write_json(&self.path("ingest", "grid.json"), &grid)?;
        let mut w = create(&self.path("ingest", "states.csv"))?;
        write_states(&mut w, &matrix)?;
        w.flush()?;
        let mut w = create(&self.path("ingest", "volumes.csv"))?;
        write_volumes(&mut w, &matrix)?;
        w.flush()?;
        let mut w = csv::Writer::from_writer(create(&self.path("ingest", "vwap.csv"))?);
        w.write_record(["slice_end", "vwap"])?;
        for (s, v) in grid.slices.iter().zip(&vwap) {
            w.write_record([s.end_ms.to_string(), v.map(|x| x.to_string()).unwrap_or_default()])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_writer(create(&self.path("ingest", "rejects.csv"))?);
        w.write_record(["file", "line", "reason"])?;
        for (f, line, reason) in &rejects {
            w.write_record([f.as_str(), &line.to_string(), reason.as_str()])?;
        }
        w.flush()?;
        let mut w = create(&self.path("ingest", "histogram.csv"))?;
        write_histogram(&mut w, &trade_size_histogram(&trades, 1.0)?)?;
        w.flush()?;

        let mut per_trader: BTreeMap<&str, u64> = BTreeMap::new();
        for t in &trades {
            *per_trader.entry(t.trader_id.as_str()).or_default() += 1;
        }
        let counts: Vec<u64> = per_trader.values().copied().collect();
        let tail = match fit_tail_exponent::<f64>(&counts) {
            Ok(fit) => json!({ "fit": fit, "reason": null }),
            Err(e) => json!({ "fit": null, "reason": e.to_string() }),
        };
        write_json(&self.path("ingest", "tail.json"), &tail)?;
        write_json(
            &self.path("ingest", "summary.json"),
            &json!({
                "instrument": instrument,
                "trades": trades.len(),
                "rejected": rejects.len(),
                "other_instruments": other_instruments,
                "outside_session": outside,
                "traders": matrix.n_traders(),
                "slices": grid.len(),
                "days": grid.days().len(),
            }),
        )?;
        Ok(())
    }

    fn load_matrix(&self) -> Result<StateMatrix<f64>> {
        let grid: TimeGrid = read_json(&self.need("ingest", "grid.json")?)?;
        let m = read_state_matrix(grid, self.open("ingest", "states.csv")?, self.open("ingest", "volumes.csv")?)?;
        Ok(m)
    }

    fn load_market(&self) -> Result<MarketData<f64>> {
        let matrix = self.load_matrix()?;
        let mut rd = csv::Reader::from_reader(self.open("ingest", "vwap.csv")?);
        let mut vwap = Vec::with_capacity(matrix.n_slices());
        for rec in rd.records() {
            let rec = rec?;
            let v = rec.get(1).unwrap_or("").trim();
            vwap.push(if v.is_empty() { None } else { Some(v.parse::<f64>().map_err(|e| anyhow!("vwap.csv: {e}"))?) });
        }
        if vwap.len() != matrix.n_slices() {
            bail!("vwap.csv has {} rows for {} slices", vwap.len(), matrix.n_slices());
        }
        Ok(MarketData { matrix, vwap })
    }

    pub fn svn(&self) -> Result<()> {
        let m = self.load_matrix()?;
        let active = leadlag_core::ingest::filter_active(&m, self.cfg.states.top_n, self.cfg.states.min_trades)?;
        let net = build_svn(&active, &self.cfg.fdr())?;
        let mut w = create(&self.path("svn", "edges.csv"))?;
        write_edges(&mut w, &net)?;
        w.flush()?;
        write_json(&self.path("svn", "meta.json"), &NetworkMeta::from(&net))?;
        Ok(())
    }

    pub fn communities(&self) -> Result<()> {
        let meta: NetworkMeta = read_json(&self.need("svn", "meta.json")?)?;
        let net = read_edges::<f64, _>(self.open("svn", "edges.csv")?, &meta)?;
        let graph = project_weighted(&net);
        let seed = stage_seed(self.cfg.seed, "communities");
        let p = detect_communities_with::<f64>(&graph, seed, self.cfg.communities.restarts);
        let mut w = create(&self.path("communities", "partition.csv"))?;
        write_partition(&mut w, &p)?;
        w.flush()?;
        Ok(())
    }

    fn load_partition(&self) -> Result<GroupPartition> {
        Ok(read_partition(self.open("communities", "partition.csv")?)?)
    }

    pub fn leadlag(&self) -> Result<()> {
        let m = self.load_matrix()?;
        let p = self.load_partition()?;
        let groups = aggregate_groups(&m, &p, self.cfg.states.rho0)?;
        let net = build_leadlag(&groups, &self.cfg.fdr(), 1)?;
        let mut w = create(&self.path("leadlag", "edges.csv"))?;
        write_leadlag(&mut w, &net)?;
        w.flush()?;
        let mut w = create(&self.path("leadlag", "adjacency.csv"))?;
        write_adjacency(&mut w, &expand_trader_leadlag(&net, &p))?;
        w.flush()?;
        Ok(())
    }

    pub fn stability(&self) -> Result<()> {
        let m = self.load_matrix()?;
        let cfg = RollingConfig {
            window_days: self.cfg.stability_window(),
            step_days: self.cfg.stability.step_days,
            rho0: self.cfg.states.rho0,
            fdr: self.cfg.fdr(),
            top_n: self.cfg.states.top_n,
            min_trades: self.cfg.states.min_trades,
            restarts: self.cfg.communities.restarts,
        };
        let run = rolling_stability::<f64>(&m, &cfg, stage_seed(self.cfg.seed, "stability"))?;
        let mut w = create(&self.path("stability", "river.csv"))?;
        write_river(&mut w, &run.river)?;
        w.flush()?;
        let mut w = create(&self.path("stability", "ari.csv"))?;
        write_series(&mut w, &run.ari)?;
        w.flush()?;
        let mut w = create(&self.path("stability", "beta.csv"))?;
        write_series(&mut w, &run.beta)?;
        w.flush()?;
        Ok(())
    }

    pub fn forecast(&self) -> Result<()> {
        let data = self.load_market()?;
        let fc = self.cfg.forecast_config();
        let runs = rolling_forecast_multi(&data, &fc, &self.cfg.forecast.targets, stage_seed(self.cfg.seed, "forecast"))?;
        let mut skipped = csv::Writer::from_writer(create(&self.path("forecast", "skipped.csv"))?);
        skipped.write_record(["target", "day", "reason"])?;
        for run in &runs {
            let mut w = create(&self.path("forecast", &format!("{}.csv", run.target.name())))?;
            write_forecasts(&mut w, &run.window_lengths, &run.records)?;
            w.flush()?;
            for (day, reason) in &run.skipped {
                skipped.write_record([run.target.name(), &day.to_string(), reason.as_str()])?;
            }
        }
        skipped.flush()?;
        // Covariates come from the shared calibrations, so any run carries them.
        let mut w = create(&self.path("forecast", "covariates.csv"))?;
        write_covariates(&mut w, &runs[0].covariates)?;
        w.flush()?;
        Ok(())
    }

    fn load_covariates(&self) -> Result<Vec<DailyCovariate<f64>>> {
        let mut rd = csv::Reader::from_reader(self.open("forecast", "covariates.csv")?);
        let opt = |s: &str| -> Result<Option<f64>> {
            let s = s.trim();
            if s.is_empty() {
                Ok(None)
            } else {
                Ok(Some(s.parse().map_err(|e| anyhow!("covariates.csv: {e}"))?))
            }
        };
        let mut out = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            out.push(DailyCovariate {
                day: rec[0].parse::<NaiveDate>().map_err(|e| anyhow!("covariates.csv: {e}"))?,
                r_h: opt(&rec[1])?,
                beta: opt(&rec[2])?,
            });
        }
        Ok(out)
    }

    pub fn evaluate(&self) -> Result<()> {
        let covariates = self.load_covariates()?;
        let method = self.cfg.test_method(stage_seed(self.cfg.seed, "evaluate"));
        let mut reports = BTreeMap::new();
        for &target in &self.cfg.forecast.targets {
            let (_, records) = read_forecasts::<f64, _>(self.open("forecast", &format!("{}.csv", target.name()))?, &self.cfg.session)?;
            let report = evaluate_with(&records, target, &covariates, method, self.cfg.evaluate.min_hour_obs)?;
            let mut w = create(&self.path("evaluate", &format!("performance_{}.csv", target.name())))?;
            write_performance(&mut w, &performance_series(&records, target))?;
            w.flush()?;
            reports.insert(target.name(), report);
        }
        write_json(&self.path("evaluate", "report.json"), &reports)?;
        Ok(())
    }

    pub fn pipeline(&self) -> Result<()> {
        for stage in STAGES {
            self.run(stage)?;
        }
        self.write_manifest()
    }

    pub fn write_manifest(&self) -> Result<()> {
        let mut inputs = Vec::new();
        for p in self.input_paths()? {
            inputs.push(json!({ "path": p.display().to_string(), "sha256": sha256_file(&p)? }));
        }
        let config = self.cfg.to_toml()?;
        let seeds: BTreeMap<&str, u64> = std::iter::once(("run", self.cfg.seed))
            .chain(STAGES.iter().map(|s| (*s, stage_seed(self.cfg.seed, s))))
            .chain(self.cfg.synth.as_ref().map(|s: &MarketSpec| ("synth", s.seed)))
            .collect();
        let outputs = output_checksums(&self.out)?;
        write_json(
            &self.out.join("manifest.json"),
            &json!({
                "version": env!("CARGO_PKG_VERSION"),
                "inputs": inputs,
                "config_sha256": hex(&Sha256::digest(config.as_bytes())),
                "config": config,
                "seeds": seeds,
                "outputs": outputs,
            }),
        )
    }
}

/// SHA-256 of every stage output below `out`, keyed by relative path.
pub fn output_checksums(out: &Path) -> Result<BTreeMap<String, String>> {
    let mut sums = BTreeMap::new();
    for stage in STAGES {
        let dir = out.join(stage);
        if !dir.is_dir() {
            continue;
        }
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
        files.sort();
        for f in files {
            let rel = format!("{stage}/{}", f.file_name().unwrap().to_string_lossy());
            sums.insert(rel, sha256_file(&f)?);
        }
    }
    Ok(sums)
}
