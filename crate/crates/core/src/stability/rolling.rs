use chrono::Datelike;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{adjusted_rand_index, export_river, leadlag_overlap_beta, relabel_partition_from, RiverRow};
use crate::community::{detect_communities_with, project_weighted, GroupPartition, DEFAULT_RESTARTS};
use crate::error::{invalid, Error, Result};
use crate::ingest::{filter_active, validate_rho0, StateMatrix};
use crate::leadlag::{aggregate_groups, build_leadlag, expand_trader_leadlag, TraderLeadLagAdjacency};
use crate::num::Real;
use crate::seed;
use crate::svn::{build_svn, FdrConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingConfig {
    /// Trading days per window.
    pub window_days: usize,
    pub step_days: usize,
    pub rho0: f64,
    pub fdr: FdrConfig,
    pub top_n: usize,
    pub min_trades: u64,
    pub restarts: usize,
}

impl Default for RollingConfig {
    fn default() -> Self {
        RollingConfig {
            window_days: 90,
            step_days: 1,
            rho0: 0.01,
            fdr: FdrConfig::default(),
            top_n: 500,
            min_trades: 100,
            restarts: DEFAULT_RESTARTS,
        }
    }
}

impl RollingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_days == 0 || self.step_days == 0 {
            return Err(invalid("stability", "window_days and step_days must be positive"));
        }
        if self.top_n == 0 {
            return Err(invalid("top_n", "must be positive"));
        }
        validate_rho0(self.rho0)?;
        self.fdr.validate()
    }
}

/// Per window: end of its last slice (epoch ms) and the relabelled
/// partition, which is empty when the window validated no link.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRun<F> {
    pub partitions: Vec<(i64, GroupPartition)>,
    /// ARI of each window with the one before it.
    pub ari: Vec<(i64, Option<F>)>,
    /// Lead-lag persistence of each window with the one before it.
    pub beta: Vec<(i64, Option<F>)>,
    pub river: Vec<RiverRow>,
}

struct Window {
    end_ms: i64,
    partition: GroupPartition,
    adjacency: Option<TraderLeadLagAdjacency>,
}

fn analyse<F: Real>(matrix: &StateMatrix<F>, range: std::ops::Range<usize>, cfg: &RollingConfig, unit: u64) -> Result<Window> {
    let end_ms = matrix.grid().slices[range.end - 1].end_ms;
    let win = matrix.window(range);
    let active = filter_active(&win, cfg.top_n, cfg.min_trades)?;
    let svn = match build_svn(&active, &cfg.fdr) {
        Ok(s) => s,
        Err(Error::WindowTooShort { .. }) => {
            return Ok(Window {
                end_ms,
                partition: GroupPartition::default(),
                adjacency: None,
            })
        }
        Err(e) => return Err(e),
    };
    let partition = detect_communities_with::<F>(&project_weighted(&svn), seed::derive(unit, &[0]), cfg.restarts);
    let adjacency = if partition.is_empty() {
        None
    } else {
        let gs = aggregate_groups(&win, &partition, F::lit(cfg.rho0))?;
        let net = build_leadlag(&gs, &cfg.fdr, 1)?;
        Some(expand_trader_leadlag(&net, &partition))
    };
    Ok(Window {
        end_ms,
        partition,
        adjacency,
    })
}

/// Slide a window of `window_days` trading days over the grid in steps of
/// `step_days`, cluster each window, carry labels forward by overlap and
/// compare consecutive windows. Seeds depend only on the window's last day,
/// so a window's result does not depend on where the run starts.
pub fn rolling_stability<F: Real>(matrix: &StateMatrix<F>, cfg: &RollingConfig, seed: u64) -> Result<StabilityRun<F>> {
    cfg.validate()?;
    let days = matrix.grid().days();
    if days.len() < cfg.window_days {
        return Err(Error::WindowTooShort {
            got: days.len(),
            need: cfg.window_days,
        });
    }
    let ends: Vec<usize> = (cfg.window_days - 1..days.len()).step_by(cfg.step_days).collect();
    let windows: Vec<Window> = ends
        .par_iter()
        .map(|&e| {
            let range = days[e + 1 - cfg.window_days].1.start..days[e].1.end;
            let unit = seed::derive(seed, &[days[e].0.num_days_from_ce() as u64, cfg.window_days as u64]);
            analyse(matrix, range, cfg, unit)
        })
        .collect::<Result<_>>()?;

    let mut partitions: Vec<(i64, GroupPartition)> = Vec::with_capacity(windows.len());
    let mut ari = Vec::new();
    let mut beta = Vec::new();
    let mut highest = 0u32;
    for (k, w) in windows.iter().enumerate() {
        let labelled = match partitions.last() {
            Some((_, prev)) => relabel_partition_from(prev, &w.partition, highest + 1),
            None => w.partition.clone(),
        };
        highest = highest.max(labelled.labels().into_iter().next_back().unwrap_or(0));
        if k > 0 {
            let prev = &windows[k - 1];
            let a = if prev.partition.is_empty() || w.partition.is_empty() {
                None
            } else {
                adjusted_rand_index::<F>(&prev.partition, &w.partition).ok()
            };
            ari.push((w.end_ms, a));
            let b = match (&prev.adjacency, &w.adjacency) {
                (Some(x), Some(y)) => leadlag_overlap_beta(x, y),
                _ => None,
            };
            beta.push((w.end_ms, b));
        }
        partitions.push((w.end_ms, labelled));
    }
    let river = if partitions.len() >= 2 { export_river(&partitions)? } else { Vec::new() };
    Ok(StabilityRun {
        partitions,
        ari,
        beta,
        river,
    })
}
