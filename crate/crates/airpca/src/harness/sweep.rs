//! Parameter sweeps: a cross product of axis values and seeds, each cell a
//! full run, aggregated into one CSV table.

use rayon::prelude::*;
use serde::Serialize;

use crate::controller::SpendingScheme;
use crate::error::{AirPcaError, Result};
use crate::harness::config::{DatasetSource, ExperimentConfig};
use crate::harness::run::{run_on, RunSummary, Workbench};

/// Aggregates of one axis value across seeds.
#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub value: f64,
    pub seeds: usize,
    pub mean_final_objective: f64,
    pub std_final_objective: f64,
    pub mean_error_ratio: f64,
    pub std_error_ratio: f64,
    /// Runs that reached the first configured error-ratio target.
    pub reached_count: usize,
    /// Median round count among the runs that reached it.
    pub median_latency: Option<f64>,
    pub diverged_count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub axis: String,
    pub cells: Vec<SweepCell>,
}

pub const SWEEP_CSV_HEADER: &str = "axis,value,seeds,mean_final_objective,std_final_objective,\
mean_error_ratio,std_error_ratio,reached_count,median_latency,diverged_count";

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(SWEEP_CSV_HEADER);
        out.push('\n');
        for c in &self.cells {
            let median = c.median_latency.map(|m| m.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                self.axis,
                c.value,
                c.seeds,
                c.mean_final_objective,
                c.std_final_objective,
                c.mean_error_ratio,
                c.std_error_ratio,
                c.reached_count,
                median,
                c.diverged_count
            ));
        }
        out
    }
}

/// Sets one named parameter; the axis names mirror the config keys.
pub fn apply_axis(cfg: &mut ExperimentConfig, axis: &str, value: f64) -> Result<()> {
    match axis {
        "devices" | "K" => cfg.devices = value as usize,
        "truncation_threshold" | "G" => cfg.channel.truncation_threshold = value,
        "p_rx_min_frac" => cfg.power.p_rx_min_frac = value,
        "q" => cfg.power.scheme = SpendingScheme::Gradual { q: value },
        "batch_size" => cfg.batch_size = Some(value as usize),
        "step_size" | "mu" => cfg.step_size = value,
        "noise_dbm" => cfg.channel.noise_dbm = value,
        "rounds" | "N" => cfg.rounds = value as usize,
        "samples" | "L" => {
            if let DatasetSource::Synthetic { samples, .. } = &mut cfg.dataset.source {
                *samples = value as usize;
            } else {
                return Err(AirPcaError::InvalidArgument(
                    "sample-count axis needs a synthetic dataset".into(),
                ));
            }
        }
        other => {
            return Err(AirPcaError::InvalidArgument(format!("unknown sweep axis '{other}'")))
        }
    }
    cfg.validate()
}

/// Runs the cross product `values × seeds` and aggregates per value.
pub fn sweep(
    base: &ExperimentConfig,
    axis: &str,
    values: &[f64],
    seeds: &[u64],
) -> Result<SweepTable> {
    if values.is_empty() || seeds.is_empty() {
        return Err(AirPcaError::InvalidArgument("need at least one value and one seed".into()));
    }
    let first_target = base
        .varpi_targets
        .first()
        .copied()
        .ok_or_else(|| AirPcaError::Config("no error-ratio target configured".into()))?;
    let target_key = crate::harness::run::format_target(first_target);

    let mut cells = Vec::with_capacity(values.len());
    for &value in values {
        let mut cfg = base.clone();
        apply_axis(&mut cfg, axis, value)?;
        let bench = Workbench::prepare(&cfg)?;

        let summaries: Vec<RunSummary> = seeds
            .par_iter()
            .map(|&seed| {
                let mut run_cfg = cfg.clone();
                run_cfg.seed = seed;
                run_on(&run_cfg, &bench).map(|(_, summary)| summary)
            })
            .collect::<Result<Vec<_>>>()?;

        let n = summaries.len() as f64;
        let finite_final: Vec<f64> = summaries
            .iter()
            .map(|s| if s.final_objective.is_finite() { s.final_objective } else { f64::NAN })
            .collect();
        let mean = |xs: &[f64]| xs.iter().filter(|v| v.is_finite()).sum::<f64>()
            / xs.iter().filter(|v| v.is_finite()).count().max(1) as f64;
        let std = |xs: &[f64], m: f64| {
            let k = xs.iter().filter(|v| v.is_finite()).count();
            if k < 2 {
                return 0.0;
            }
            (xs.iter().filter(|v| v.is_finite()).map(|v| (v - m).powi(2)).sum::<f64>()
                / (k - 1) as f64)
                .sqrt()
        };
        let ratios: Vec<f64> = summaries
            .iter()
            .map(|s| if s.error_ratio.is_finite() { s.error_ratio } else { f64::NAN })
            .collect();
        let mean_final = mean(&finite_final);
        let mean_ratio = mean(&ratios);

        let mut latencies: Vec<f64> = summaries
            .iter()
            .filter_map(|s| s.latency_to_target.get(&target_key).copied().flatten())
            .map(|r| r as f64)
            .collect();
        latencies.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median_latency = if latencies.is_empty() {
            None
        } else if latencies.len() % 2 == 1 {
            Some(latencies[latencies.len() / 2])
        } else {
            Some((latencies[latencies.len() / 2 - 1] + latencies[latencies.len() / 2]) / 2.0)
        };

        cells.push(SweepCell {
            value,
            seeds: n as usize,
            mean_final_objective: mean_final,
            std_final_objective: std(&finite_final, mean_final),
            mean_error_ratio: mean_ratio,
            std_error_ratio: std(&ratios, mean_ratio),
            reached_count: latencies.len(),
            median_latency,
            diverged_count: summaries.iter().filter(|s| s.diverged).count(),
        });
    }
    Ok(SweepTable { axis: axis.to_string(), cells })
}
