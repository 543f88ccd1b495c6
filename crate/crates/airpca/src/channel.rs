//! Broadband multi-access channel simulation: per-element Rayleigh fading,
//! truncated channel inversion, over-the-air superposition with additive
//! noise, and server-side de-normalization into a noisy global gradient.
//!
//! Gradient matrices are complex-vectorized (consecutive entries become the
//! I/Q components of one symbol), normalized to the shared element statistics
//! `(η, ν)`, inverted against each sub-channel gain when the gain power
//! clears the truncation threshold, and superposed at the receiver. Gains are
//! drawn independently per gradient element per round, so every element sees
//! its own binomial count of active devices.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{AirPcaError, Result};
use crate::expint::exponential_integral;
use crate::pca::GradientMatrix;

/// Smallest representable element spread; a `ν` at this floor means the
/// gradients were constant and normalization falls back to `ν = 1`.
pub const NU_FLOOR: f64 = 1e-12;

/// Static channel parameters, all powers in linear milliwatts.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    /// OFDM sub-channel count M.
    pub sub_channels: usize,
    /// Truncation threshold G on the sub-channel power gain.
    pub truncation_threshold: f64,
    /// Per-element complex noise variance σ².
    pub noise_var: f64,
    /// Average transmit power budget P̄ per device.
    pub avg_tx_power: f64,
    /// Per-device, per-round probability of losing the whole uplink.
    pub outage_prob: f64,
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sub_channels == 0 {
            return Err(AirPcaError::Config("sub-channel count must be positive".into()));
        }
        if !(self.truncation_threshold > 0.0) {
            return Err(AirPcaError::Config("truncation threshold must be positive".into()));
        }
        if !(self.noise_var > 0.0) {
            return Err(AirPcaError::Config("noise variance must be positive".into()));
        }
        if !(self.avg_tx_power > 0.0) {
            return Err(AirPcaError::Config("transmit power budget must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.outage_prob) {
            return Err(AirPcaError::Config("outage probability must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Probability `e^{−G}` that a sub-channel survives truncation.
    pub fn activation_probability(&self) -> f64 {
        (-self.truncation_threshold).exp()
    }

    /// Receive-power cap `P̄ / (M · Ei(G))` implied by the average transmit
    /// power constraint under truncated channel inversion.
    pub fn max_avg_receive_power(&self) -> Result<f64> {
        max_avg_receive_power(self)
    }
}

/// `P̄rx_max = P̄ / (M · Ei(G))`.
pub fn max_avg_receive_power(cfg: &ChannelConfig) -> Result<f64> {
    cfg.validate()?;
    let ei = exponential_integral(cfg.truncation_threshold)?;
    Ok(cfg.avg_tx_power / (cfg.sub_channels as f64 * ei))
}

/// Converts a dBm power figure to linear milliwatts.
pub fn dbm_to_milliwatts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Number of complex symbols carrying a `D × d` gradient.
pub fn complex_len(dim: usize, rank: usize) -> usize {
    (dim * rank).div_ceil(2)
}

/// Flattens a gradient column-major and pairs consecutive entries into
/// complex symbols; an odd element count is padded with one zero.
pub fn complex_vectorize(g: &GradientMatrix) -> Vec<Complex64> {
    let flat = g.matrix().as_slice();
    let mut out = Vec::with_capacity(flat.len().div_ceil(2));
    let mut chunks = flat.chunks_exact(2);
    for pair in &mut chunks {
        out.push(Complex64::new(pair[0], pair[1]));
    }
    if let [last] = chunks.remainder() {
        out.push(Complex64::new(*last, 0.0));
    }
    out
}

/// Exact inverse of [`complex_vectorize`]; the pad of an odd `D·d` is dropped.
pub fn devectorize(v: &[Complex64], dim: usize, rank: usize) -> Result<GradientMatrix> {
    let expected = complex_len(dim, rank);
    if v.len() != expected {
        return Err(AirPcaError::ShapeMismatch(format!(
            "complex vector has {} elements, expected {expected} for {dim}×{rank}",
            v.len()
        )));
    }
    let total = dim * rank;
    let mut flat = Vec::with_capacity(total);
    for z in v {
        flat.push(z.re);
        if flat.len() < total {
            flat.push(z.im);
        }
    }
    Ok(GradientMatrix::new(DMatrix::from_column_slice(dim, rank, &flat)))
}

/// Shared element statistics `(η, ν)` every device normalizes against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationStats {
    pub eta: f64,
    pub nu: f64,
}

/// Pooled mean and (population) standard deviation of all gradient elements
/// across devices, with `ν` floored at [`NU_FLOOR`]. Models an ideal scalar
/// control channel distributing the statistics.
pub fn compute_normalization(local_gradients: &[GradientMatrix]) -> Result<NormalizationStats> {
    if local_gradients.is_empty() {
        return Err(AirPcaError::InvalidArgument("no gradients to normalize".into()));
    }
    let count: usize = local_gradients.iter().map(|g| g.matrix().len()).sum();
    let mean: f64 = local_gradients
        .iter()
        .flat_map(|g| g.matrix().iter())
        .sum::<f64>()
        / count as f64;
    let var: f64 = local_gradients
        .iter()
        .flat_map(|g| g.matrix().iter())
        .map(|&v| (v - mean) * (v - mean))
        .sum::<f64>()
        / count as f64;
    Ok(NormalizationStats { eta: mean, nu: var.sqrt().max(NU_FLOOR) })
}

/// One round's fading state: per-device per-element gains, activation masks,
/// receiver noise, and the per-element active-device counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    devices: usize,
    elements: usize,
    gains: Vec<Complex64>,
    active: Vec<bool>,
    noise: Vec<Complex64>,
    active_count: Vec<u32>,
}

impl ChannelRealization {
    pub fn devices(&self) -> usize {
        self.devices
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    pub fn gain(&self, device: usize, element: usize) -> Complex64 {
        self.gains[device * self.elements + element]
    }

    pub fn is_active(&self, device: usize, element: usize) -> bool {
        self.active[device * self.elements + element]
    }

    pub fn noise(&self, element: usize) -> Complex64 {
        self.noise[element]
    }

    /// `K_n^{(i)}`: devices whose sub-channel for element `i` survived.
    pub fn active_count(&self, element: usize) -> u32 {
        self.active_count[element]
    }

    pub fn active_counts(&self) -> &[u32] {
        &self.active_count
    }
}

/// Draws i.i.d. `CN(0,1)` gains and `CN(0,σ²)` receiver noise for `K` devices
/// and `c` gradient elements. A device in outage has its whole mask row
/// cleared; otherwise an element is active when `|h|² ≥ G`.
pub fn sample_channel<R: Rng>(
    cfg: &ChannelConfig,
    devices: usize,
    elements: usize,
    rng: &mut R,
) -> Result<ChannelRealization> {
    cfg.validate()?;
    if devices == 0 || elements == 0 {
        return Err(AirPcaError::InvalidArgument("need at least one device and element".into()));
    }

    let mut gains = Vec::with_capacity(devices * elements);
    let mut active = Vec::with_capacity(devices * elements);
    for _ in 0..devices {
        let in_outage = cfg.outage_prob > 0.0 && rng.gen::<f64>() < cfg.outage_prob;
        for _ in 0..elements {
            let h = draw_cn(rng, 1.0);
            gains.push(h);
            active.push(!in_outage && h.norm_sqr() >= cfg.truncation_threshold);
        }
    }
    let noise: Vec<Complex64> = (0..elements).map(|_| draw_cn(rng, cfg.noise_var)).collect();

    let mut active_count = vec![0u32; elements];
    for k in 0..devices {
        for i in 0..elements {
            if active[k * elements + i] {
                active_count[i] += 1;
            }
        }
    }
    Ok(ChannelRealization { devices, elements, gains, active, noise, active_count })
}

// Complex normal with E|z|² = var.
fn draw_cn<R: Rng>(rng: &mut R, var: f64) -> Complex64 {
    let sd = (var / 2.0).sqrt();
    Complex64::new(
        sd * rng.sample::<f64, _>(StandardNormal),
        sd * rng.sample::<f64, _>(StandardNormal),
    )
}

/// Everything the server observes (plus test-only ground truth) for one round.
#[derive(Debug, Clone)]
pub struct RoundTransmission {
    /// Superposed symbols at the receiver.
    pub received: Vec<Complex64>,
    /// De-normalized, de-vectorized noisy global gradient.
    pub noisy_gradient: GradientMatrix,
    /// Realized transmit power `P_{k,n} = Σ_i |p_{k,n}^{(i)}|²` per device.
    pub per_device_tx_power: Vec<f64>,
    /// Realized combined channel-plus-data noise `ĝ − g` (test observable).
    pub combined_noise: DMatrix<f64>,
    /// Elements where no device survived truncation (fallback to `η`).
    pub dead_elements: usize,
    /// Set when `ν` was at the floor and normalization fell back to `ν = 1`.
    pub nu_fallback: bool,
}

/// Runs one over-the-air aggregation round at receive power `p_rx`:
/// normalization, truncated channel inversion, superposition with receiver
/// noise, de-normalization by the true active counts, and de-vectorization.
///
/// Elements with a zero active count are set to the prior mean `η` and
/// counted in `dead_elements`.
pub fn transmit_and_aggregate(
    local_gradients: &[GradientMatrix],
    stats: &NormalizationStats,
    realization: &ChannelRealization,
    p_rx: f64,
) -> Result<RoundTransmission> {
    if !(p_rx > 0.0) {
        return Err(AirPcaError::InvalidArgument(format!("receive power must be positive, got {p_rx}")));
    }
    if local_gradients.len() != realization.devices() {
        return Err(AirPcaError::ShapeMismatch(format!(
            "{} gradients for {} devices",
            local_gradients.len(),
            realization.devices()
        )));
    }
    let (dim, rank) = local_gradients[0].matrix().shape();
    if local_gradients.iter().any(|g| g.matrix().shape() != (dim, rank)) {
        return Err(AirPcaError::ShapeMismatch("gradients have mixed shapes".into()));
    }
    let elements = complex_len(dim, rank);
    if elements != realization.elements() {
        return Err(AirPcaError::ShapeMismatch(format!(
            "realization covers {} elements, gradient needs {elements}",
            realization.elements()
        )));
    }

    let nu_fallback = stats.nu <= NU_FLOOR;
    if nu_fallback {
        eprintln!("warning: degenerate gradient spread, normalizing with nu = 1");
    }
    let nu = if nu_fallback { 1.0 } else { stats.nu };
    let eta = stats.eta;
    let amplitude = p_rx.sqrt();

    let devices = local_gradients.len();
    let vectors: Vec<Vec<Complex64>> = local_gradients.iter().map(complex_vectorize).collect();

    let mut received = vec![Complex64::new(0.0, 0.0); elements];
    let mut per_device_tx_power = vec![0.0; devices];
    for (k, vec_k) in vectors.iter().enumerate() {
        for (i, z) in vec_k.iter().enumerate() {
            if realization.is_active(k, i) {
                // Inversion aligns magnitudes: h · (√p_rx/h) · s = √p_rx · s.
                let symbol = Complex64::new((z.re - eta) / nu, (z.im - eta) / nu);
                received[i] += amplitude * symbol;
                per_device_tx_power[k] += p_rx / realization.gain(k, i).norm_sqr();
            }
        }
    }
    for i in 0..elements {
        received[i] += realization.noise(i);
    }

    let mut dead_elements = 0usize;
    let estimate: Vec<Complex64> = (0..elements)
        .map(|i| {
            let count = realization.active_count(i);
            if count == 0 {
                dead_elements += 1;
                Complex64::new(eta, eta)
            } else {
                let scale = nu / (count as f64 * amplitude);
                Complex64::new(scale * received[i].re + eta, scale * received[i].im + eta)
            }
        })
        .collect();

    let noisy_gradient = devectorize(&estimate, dim, rank)?;
    let global = crate::pca::global_gradient(local_gradients)?;
    let combined_noise = noisy_gradient.matrix() - global.matrix();

    Ok(RoundTransmission {
        received,
        noisy_gradient,
        per_device_tx_power,
        combined_noise,
        dead_elements,
        nu_fallback,
    })
}
