//! The per-round AirPCA loop: broadcast, local gradients, over-the-air
//! aggregation at the controller-chosen receive power, descent step, region
//! detection, metric recording.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::channel::{
    complex_len, compute_normalization, max_avg_receive_power, sample_channel,
    transmit_and_aggregate,
};
use crate::controller::{DetectorConfig, DetectorState, PowerLedger, RegionLabel};
use crate::dataset::{concat_shards, load_mnist_idx, partition, synthesize_spectrum_dataset, DataMatrix, DeviceShard};
use crate::error::{AirPcaError, Result};
use crate::harness::config::{DatasetSource, ExperimentConfig, InitSpec, Variant};
use crate::pca::{
    centralized_pca, global_gradient, identity_subspace, local_gradient_sampled,
    make_stationary_point, objective_from_covariance, sgd_step, GradientMatrix,
    StationaryPointSpec, Subspace,
};
use crate::rng::{round_rng, stream};

/// One row of `metrics.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct RoundMetrics {
    pub round: usize,
    /// True objective `F(W_n)` at the state the round started from.
    pub objective: f64,
    /// Norm of the aggregated (noisy) gradient `‖ĝ(W_n)‖`.
    pub grad_norm: f64,
    /// Region label governing this round's power.
    pub region: RegionLabel,
    pub p_rx: f64,
    /// Mean over elements of the active-device count `K_n^{(i)}`.
    pub mean_active_count: f64,
    /// Mean over devices of the realized transmit power `P_{k,n}`.
    pub mean_tx_power: f64,
    /// Ledger savings after this round.
    pub savings: f64,
}

/// Run outcome.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub final_objective: f64,
    pub centralized_objective: f64,
    /// `ϖ = final/centralized − 1`.
    pub error_ratio: f64,
    /// First round at which `F ≤ (1+ϖ)·F★`, per configured target.
    pub latency_to_target: BTreeMap<String, Option<usize>>,
    /// Mean over devices of the total transmit energy `Σ_n P_{k,n}`.
    pub total_energy_per_device: f64,
    pub rounds_executed: usize,
    pub diverged: bool,
    pub early_stopped: bool,
}

/// Frozen CSV header for `metrics.csv`.
pub const METRICS_CSV_HEADER: &str =
    "round,objective,grad_norm,region,p_rx,mean_active_count,mean_tx_power,savings";

/// Renders metric rows in the frozen column order.
pub fn metrics_to_csv(metrics: &[RoundMetrics]) -> String {
    let mut out = String::with_capacity(64 * (metrics.len() + 1));
    out.push_str(METRICS_CSV_HEADER);
    out.push('\n');
    for m in metrics {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            m.round,
            m.objective,
            m.grad_norm,
            m.region.as_str(),
            m.p_rx,
            m.mean_active_count,
            m.mean_tx_power,
            m.savings
        ));
    }
    out
}

/// First round `n` with `F(W_n) ≤ (1 + target)·centralized`.
pub fn latency_to_target(
    metrics: &[RoundMetrics],
    centralized_objective: f64,
    varpi_target: f64,
) -> Option<usize> {
    if varpi_target <= 0.0 {
        return None;
    }
    let threshold = (1.0 + varpi_target) * centralized_objective;
    metrics.iter().find(|m| m.objective <= threshold).map(|m| m.round)
}

fn build_dataset(cfg: &ExperimentConfig) -> Result<DataMatrix> {
    let mut data = match &cfg.dataset.source {
        DatasetSource::Mnist { path, max_samples } => {
            load_mnist_idx(std::path::Path::new(path), *max_samples)?
        }
        DatasetSource::Synthetic { dim, samples, spectrum } => {
            synthesize_spectrum_dataset(*dim, *samples, spectrum, cfg.dataset.seed)?
        }
    };
    if cfg.dataset.center {
        data.center();
    }
    Ok(data)
}

fn initial_subspace(cfg: &ExperimentConfig, trimmed: &DataMatrix) -> Result<Subspace> {
    let d = cfg.dataset.subspace_dim;
    match &cfg.init {
        InitSpec::Identity => Ok(identity_subspace(trimmed.dim(), d)),
        InitSpec::Saddle { indices } => {
            let spec = StationaryPointSpec::new(indices.clone(), None)?;
            make_stationary_point(trimmed, &spec)
        }
    }
}

/// Everything `run` needs that derives from the config, reusable across
/// repeated runs on the same dataset.
pub struct Workbench {
    pub shards: Vec<DeviceShard>,
    pub trimmed: DataMatrix,
    pub covariance: DMatrix<f64>,
    pub trace: f64,
    pub centralized_objective: f64,
    pub start: Subspace,
    shard_traces: Vec<f64>,
}

impl Workbench {
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let data = build_dataset(cfg)?;
        let shards = partition(&data, cfg.devices, cfg.dataset.seed)?;
        let trimmed = concat_shards(&shards)?;
        let covariance = trimmed.covariance();
        let trace = covariance.trace();
        let oracle = centralized_pca(&trimmed, cfg.dataset.subspace_dim)?;
        let start = initial_subspace(cfg, &trimmed)?;
        let shard_traces = shards.iter().map(|s| s.covariance().trace()).collect();
        Ok(Self {
            shards,
            trimmed,
            covariance,
            trace,
            centralized_objective: oracle.objective,
            start,
            shard_traces,
        })
    }

    fn objective(&self, w: &Subspace) -> f64 {
        objective_from_covariance(w, &self.covariance, self.trace, self.trimmed.len())
    }

    fn local_objective(&self, w: &Subspace, device: usize) -> f64 {
        let shard = &self.shards[device];
        objective_from_covariance(w, shard.covariance(), self.shard_traces[device], shard.len())
    }
}

// Honesty mode: the per-device objective values cross the same analog uplink
// as the gradients (one complex symbol each), so the detector sees a noisy
// aggregate. Treated as control-plane traffic, not counted in the energy.
fn aggregate_objective_over_air(
    bench: &Workbench,
    w: &Subspace,
    channel_cfg: &crate::channel::ChannelConfig,
    p_rx: f64,
    seed: u64,
    round: usize,
) -> Result<f64> {
    let scalars: Vec<GradientMatrix> = (0..bench.shards.len())
        .map(|k| GradientMatrix::new(DMatrix::from_element(1, 1, bench.local_objective(w, k))))
        .collect();
    let stats = compute_normalization(&scalars)?;
    let mut rng = round_rng(seed, stream::OBJECTIVE, round as u64);
    let realization = sample_channel(channel_cfg, scalars.len(), 1, &mut rng)?;
    let tx = transmit_and_aggregate(&scalars, &stats, &realization, p_rx)?;
    Ok(tx.noisy_gradient.matrix()[(0, 0)])
}

/// Executes the configured experiment.
pub fn run(cfg: &ExperimentConfig) -> Result<(Vec<RoundMetrics>, RunSummary)> {
    let bench = Workbench::prepare(cfg)?;
    run_on(cfg, &bench)
}

/// Executes on an already-prepared workbench (used by sweeps to share data).
pub fn run_on(cfg: &ExperimentConfig, bench: &Workbench) -> Result<(Vec<RoundMetrics>, RunSummary)> {
    if cfg.variant == Variant::Centralized {
        let mut latency = BTreeMap::new();
        for &t in &cfg.varpi_targets {
            latency.insert(format_target(t), Some(0));
        }
        let summary = RunSummary {
            final_objective: bench.centralized_objective,
            centralized_objective: bench.centralized_objective,
            error_ratio: 0.0,
            latency_to_target: latency,
            total_energy_per_device: 0.0,
            rounds_executed: 0,
            diverged: false,
            early_stopped: false,
        };
        return Ok((Vec::new(), summary));
    }

    let devices = cfg.devices;
    let dim = bench.trimmed.dim();
    let d = cfg.dataset.subspace_dim;
    let elements = complex_len(dim, d);
    let channel_cfg = cfg.channel.to_channel_config();
    let p_rx_cap = max_avg_receive_power(&channel_cfg)?;
    let p_rx_min = cfg.power.p_rx_min_frac * p_rx_cap;

    let mut ledger = PowerLedger::new(p_rx_min, p_rx_cap, cfg.power.scheme)?;
    let mut detector: Option<DetectorState> = None; // armed after round 0 fixes ε
    let mut region = RegionLabel::NonStationary;

    let mut w = bench.start.clone();
    let mut metrics: Vec<RoundMetrics> = Vec::with_capacity(cfg.rounds);
    let mut per_device_energy = vec![0.0f64; devices];
    let mut diverged = false;
    let mut early_stopped = false;
    let mut optimum_streak = 0usize;
    let mut f_window: Vec<f64> = Vec::with_capacity(cfg.rounds + 1);

    for round in 0..cfg.rounds {
        let f_now = bench.objective(&w);
        if !f_now.is_finite() {
            diverged = true;
            break;
        }
        f_window.push(f_now);

        // Local gradient computation (optionally mini-batched).
        let mut locals: Vec<GradientMatrix> = Vec::with_capacity(devices);
        let mut batch_rng = round_rng(cfg.seed, stream::MINIBATCH, round as u64);
        for shard in &bench.shards {
            locals.push(local_gradient_sampled(&w, shard, cfg.batch_size, &mut batch_rng)?);
        }

        // Aggregation: over the air, or exact for the noise-free variant.
        let (noisy, grad_norm, p_rx, mean_active, mean_tx, savings) = match cfg.variant {
            Variant::NoiseFree => {
                let exact = global_gradient(&locals)?;
                let norm = exact.norm();
                (exact, norm, 0.0, devices as f64, 0.0, 0.0)
            }
            Variant::FixedPower | Variant::AdaptivePower => {
                let p_rx = if cfg.variant == Variant::FixedPower {
                    p_rx_cap
                } else {
                    ledger.power_for_round(region)
                };
                let stats = compute_normalization(&locals)?;
                let mut ch_rng = round_rng(cfg.seed, stream::CHANNEL, round as u64);
                let realization = sample_channel(&channel_cfg, devices, elements, &mut ch_rng)?;
                let tx = transmit_and_aggregate(&locals, &stats, &realization, p_rx)?;
                let mean_active = realization.active_counts().iter().map(|&c| f64::from(c)).sum::<f64>()
                    / elements as f64;
                let mean_tx = tx.per_device_tx_power.iter().sum::<f64>() / devices as f64;
                for (acc, p) in per_device_energy.iter_mut().zip(&tx.per_device_tx_power) {
                    *acc += p;
                }
                let savings = if cfg.variant == Variant::AdaptivePower { ledger.savings() } else { 0.0 };
                let norm = tx.noisy_gradient.norm();
                (tx.noisy_gradient, norm, p_rx, mean_active, mean_tx, savings)
            }
            Variant::Centralized => unreachable!("handled above"),
        };

        metrics.push(RoundMetrics {
            round,
            objective: f_now,
            grad_norm,
            region,
            p_rx,
            mean_active_count: mean_active,
            mean_tx_power: mean_tx,
            savings,
        });

        // The detector's objective input, taken at the pre-step state.
        let detector_objective = if cfg.detector.noisy_objective && cfg.variant != Variant::NoiseFree
        {
            aggregate_objective_over_air(bench, &w, &channel_cfg, p_rx, cfg.seed, round)?
        } else {
            f_now
        };

        // Descent step; a non-finite gradient is a divergence, not a bug.
        match sgd_step(&w, &noisy, cfg.step_size) {
            Ok(next) => w = next,
            Err(AirPcaError::Numerical(_)) => {
                diverged = true;
                break;
            }
            Err(other) => return Err(other),
        }

        // Region detection for the next round; ε is anchored at round 0.
        let det = detector.get_or_insert_with(|| {
            let epsilon = (cfg.detector.epsilon_rel * grad_norm).max(f64::MIN_POSITIVE);
            DetectorState::new(DetectorConfig {
                epsilon,
                f0_rel: cfg.detector.f0_rel,
                n0: cfg.detector.n0,
            })
            .expect("validated config")
        });
        region = det.observe(grad_norm, detector_objective);

        // Optional early stop: optimum label held and F flat over 100 rounds.
        if cfg.early_stop {
            if region == RegionLabel::Optimum {
                optimum_streak += 1;
            } else {
                optimum_streak = 0;
            }
            if optimum_streak >= 100 && f_window.len() > 100 {
                let then = f_window[f_window.len() - 101];
                if (f_now - then).abs() < 1e-6 * then.abs().max(f64::MIN_POSITIVE) {
                    early_stopped = true;
                    break;
                }
            }
        }
    }

    let final_objective = if diverged { f64::INFINITY } else { bench.objective(&w) };
    let rounds_executed = metrics.len();
    let mut latency = BTreeMap::new();
    for &t in &cfg.varpi_targets {
        let mut hit = latency_to_target(&metrics, bench.centralized_objective, t);
        if hit.is_none() && final_objective <= (1.0 + t) * bench.centralized_objective {
            hit = Some(rounds_executed);
        }
        latency.insert(format_target(t), hit);
    }
    let total_energy_per_device = per_device_energy.iter().sum::<f64>() / devices as f64;
    let summary = RunSummary {
        final_objective,
        centralized_objective: bench.centralized_objective,
        error_ratio: final_objective / bench.centralized_objective - 1.0,
        latency_to_target: latency,
        total_energy_per_device,
        rounds_executed,
        diverged,
        early_stopped,
    };
    Ok((metrics, summary))
}

pub(crate) fn format_target(t: f64) -> String {
    format!("{t}")
}
