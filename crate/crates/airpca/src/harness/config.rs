//! Experiment configuration, read from JSON.
//!
//! Powers are configured in dBm and converted to linear milliwatts; the
//! per-element noise variance divides the total noise power across the
//! sub-channels. The dataset (and its partition) depend only on
//! `dataset.seed`, so Monte Carlo repetition over `seed` varies the channel
//! and mini-batch randomness on fixed data.

use serde::{Deserialize, Serialize};

use crate::channel::{dbm_to_milliwatts, ChannelConfig};
use crate::controller::SpendingScheme;
use crate::error::{AirPcaError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DatasetSource {
    /// IDX3 image file, pixels scaled into `[0, 1]`.
    Mnist { path: String, max_samples: usize },
    /// Gaussian data with a prescribed covariance spectrum.
    Synthetic { dim: usize, samples: usize, spectrum: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub source: DatasetSource,
    /// Number of principal components `d`.
    pub subspace_dim: usize,
    /// Seed for synthesis and partitioning.
    pub seed: u64,
    /// Subtract the feature mean (exploration only; off by default).
    #[serde(default)]
    pub center: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub sub_channels: usize,
    pub truncation_threshold: f64,
    /// Average transmit power budget per device, in dBm.
    pub p_bar_dbm: f64,
    /// Total noise power over the whole bandwidth, in dBm.
    pub noise_dbm: f64,
    #[serde(default)]
    pub outage_prob: f64,
}

impl ChannelSpec {
    /// Linear-unit channel configuration; the per-element noise variance is
    /// the total noise power divided across sub-channels.
    pub fn to_channel_config(&self) -> ChannelConfig {
        ChannelConfig {
            sub_channels: self.sub_channels,
            truncation_threshold: self.truncation_threshold,
            noise_var: dbm_to_milliwatts(self.noise_dbm) / self.sub_channels as f64,
            avg_tx_power: dbm_to_milliwatts(self.p_bar_dbm),
            outage_prob: self.outage_prob,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorSpec {
    /// Gradient-norm threshold relative to `‖ĝ(W_0)‖`.
    pub epsilon_rel: f64,
    /// Saddle-probation length in rounds.
    pub n0: u32,
    /// Error-reduction threshold relative to the objective at probation entry.
    pub f0_rel: f64,
    /// Feed the detector an over-the-air aggregate of the local objectives
    /// instead of the exact value (honesty experiments; metrics always record
    /// the exact objective).
    #[serde(default)]
    pub noisy_objective: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerSpec {
    #[serde(flatten)]
    pub scheme: SpendingScheme,
    /// Saddle-region receive power as a fraction of the average cap.
    pub p_rx_min_frac: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Region-adaptive receive power with saving spending.
    AdaptivePower,
    /// Receive power pinned at the average cap.
    FixedPower,
    /// Channel bypassed; the server sees the exact global gradient.
    NoiseFree,
    /// No descent at all: the SVD oracle.
    Centralized,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "adaptive_power" | "adaptive" => Ok(Self::AdaptivePower),
            "fixed_power" | "fixed" => Ok(Self::FixedPower),
            "noise_free" => Ok(Self::NoiseFree),
            "centralized" => Ok(Self::Centralized),
            other => Err(AirPcaError::Config(format!("unknown variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InitSpec {
    /// `W_0 = [I_d, 0]ᵀ`.
    #[default]
    Identity,
    /// Start exactly on the stationary point spanned by these eigen indices.
    Saddle { indices: Vec<usize> },
}

/// Monte Carlo effort for `validate-bounds`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidatorSpec {
    #[serde(default = "default_theorem1_paths")]
    pub theorem1_paths: usize,
    #[serde(default = "default_theorem2_seeds")]
    pub theorem2_seeds: usize,
}

fn default_theorem1_paths() -> usize {
    300
}

fn default_theorem2_seeds() -> usize {
    200
}

impl Default for ValidatorSpec {
    fn default() -> Self {
        Self { theorem1_paths: default_theorem1_paths(), theorem2_seeds: default_theorem2_seeds() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    /// Device count `K`.
    pub devices: usize,
    pub channel: ChannelSpec,
    /// SGD step size `μ`.
    pub step_size: f64,
    /// Round budget `N`.
    pub rounds: usize,
    pub detector: DetectorSpec,
    pub power: PowerSpec,
    pub variant: Variant,
    /// Per-device mini-batch size; full batch when absent.
    #[serde(default)]
    pub batch_size: Option<usize>,
    /// Master seed for channel and mini-batch randomness.
    pub seed: u64,
    #[serde(default)]
    pub init: InitSpec,
    /// Error-ratio targets reported in the summary's latency map.
    #[serde(default = "default_varpi_targets")]
    pub varpi_targets: Vec<f64>,
    /// Stop once the optimum label has been held with a flat objective for
    /// 100 rounds.
    #[serde(default)]
    pub early_stop: bool,
    #[serde(default)]
    pub validator: ValidatorSpec,
}

fn default_varpi_targets() -> Vec<f64> {
    vec![0.07]
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) {
            return Err(AirPcaError::Config("step size must be positive".into()));
        }
        if self.rounds == 0 {
            return Err(AirPcaError::Config("round budget must be at least 1".into()));
        }
        if self.devices == 0 {
            return Err(AirPcaError::Config("device count must be positive".into()));
        }
        if self.dataset.subspace_dim == 0 {
            return Err(AirPcaError::Config("subspace dimension must be positive".into()));
        }
        if !(self.power.p_rx_min_frac > 0.0 && self.power.p_rx_min_frac < 1.0) {
            return Err(AirPcaError::Config("p_rx_min_frac must lie in (0, 1)".into()));
        }
        if self.varpi_targets.iter().any(|&t| !(t > 0.0)) {
            return Err(AirPcaError::Config("error-ratio targets must be positive".into()));
        }
        self.channel.to_channel_config().validate()?;
        Ok(())
    }

    /// Desk-scale synthetic default: `D = 20`, `d = 3`, `K = 20`, `L = 400`.
    /// Runs in seconds and shows all three region types when started on a
    /// saddle.
    ///
    /// The channel numbers differ from the full-scale MNIST settings on
    /// purpose: a near-unity activation probability (`G = 0.001`) removes the
    /// device-dropout data noise that would otherwise drown the channel
    /// noise, and the noise power is raised until the receive-power knob
    /// visibly controls the saddle-escape rate at this problem size.
    pub fn desk_default(seed: u64) -> Self {
        // Three dominant components above a strictly decreasing tail, so the
        // skip-top saddle is well separated and every selection is unambiguous.
        let mut spectrum = vec![10.0, 9.0, 8.0];
        for i in 0..17 {
            spectrum.push(2.0 - 0.094 * i as f64);
        }
        Self {
            dataset: DatasetSpec {
                source: DatasetSource::Synthetic { dim: 20, samples: 400, spectrum },
                subspace_dim: 3,
                seed: 7,
                center: false,
            },
            devices: 20,
            channel: ChannelSpec {
                sub_channels: 64,
                truncation_threshold: 0.001,
                p_bar_dbm: 26.0,
                noise_dbm: 14.0,
                outage_prob: 0.0,
            },
            step_size: 2.5e-4,
            rounds: 5000,
            detector: DetectorSpec { epsilon_rel: 0.05, n0: 50, f0_rel: 0.01, noisy_objective: false },
            power: PowerSpec { scheme: SpendingScheme::Gradual { q: 0.8 }, p_rx_min_frac: 0.1 },
            variant: Variant::AdaptivePower,
            batch_size: None,
            seed,
            init: InitSpec::Identity,
            varpi_targets: default_varpi_targets(),
            early_stop: false,
            validator: ValidatorSpec::default(),
        }
    }

    /// Desk config started exactly on the skip-top saddle, with the detector
    /// re-anchored: at a saddle start `‖ĝ(W_0)‖` is the cap-power noise
    /// floor, so `epsilon_rel` must sit above the floor ratio between the
    /// saddle and cap powers (`√(1/p_rx_min_frac) ≈ 4.5` here), and the
    /// probation must outlast the noise-seeded escape incubation.
    pub fn desk_saddle(seed: u64) -> Self {
        let mut cfg = Self::desk_default(seed);
        cfg.init = InitSpec::Saddle { indices: vec![1, 2, 3] };
        cfg.detector = DetectorSpec { epsilon_rel: 12.0, n0: 2000, f0_rel: 0.005, noisy_objective: false };
        cfg.power.p_rx_min_frac = 0.03;
        cfg
    }
}
