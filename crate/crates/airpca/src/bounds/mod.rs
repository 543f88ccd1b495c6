//! Closed-form evaluators for the descent-speed bounds and their supporting
//! binomial inequalities, plus empirical estimation of the strict-saddle
//! constants and Monte Carlo validators that check the analysis against the
//! simulator.

pub mod validate;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::{concat_shards, DeviceShard};
use crate::error::{AirPcaError, Result};
use crate::pca::{
    self, dataset_gradient, global_gradient, local_gradient, min_hessian_eigenvalue, objective,
    GradientMatrix, StationaryPointSpec, Subspace,
};
use crate::rng::stream_rng;

/// Strict-saddle and smoothness constants of the objective.
///
/// `alpha`: strong convexity near the optimum; `gamma`: magnitude of the most
/// negative Hessian eigenvalue in saddle regions; `epsilon`: gradient-norm
/// threshold of non-stationary regions; `delta`: optimum-neighbourhood
/// radius; `beta`/`chi`: gradient/Hessian Lipschitz constants; `b_bound`/
/// `c_bound`: objective and gradient-norm bounds; `kappa2`: per-element
/// data-noise variance bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaddleConstants {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub beta: f64,
    pub chi: f64,
    pub b_bound: f64,
    pub c_bound: f64,
    pub kappa2: f64,
}

impl SaddleConstants {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("epsilon", self.epsilon),
            ("delta", self.delta),
            ("beta", self.beta),
            ("chi", self.chi),
            ("b_bound", self.b_bound),
            ("c_bound", self.c_bound),
            ("kappa2", self.kappa2),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(AirPcaError::InvalidArgument(format!(
                    "saddle constant {name} must be strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Noise-regime constants governing saddle-region descent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseRegime {
    /// `𝒱_max = κ²/(Kζ) + 3ν²σ²/(K²ζ²·P_rx_min)`.
    pub v_max: f64,
    /// `𝒱_min = ν²σ²/(K²·P_rx_max)`, plus `κ²/K` behind [`RegimeInputs::extended_v_min`].
    pub v_min: f64,
    /// Round horizon `⌈log(6c·𝒱_max/𝒱_min + 1)/(2μγ)⌉`.
    pub n_max: usize,
    /// `ρ = min{(2βc/γ)·log(6c·𝒱_max/𝒱_min + 1), 1}`.
    pub rho: f64,
    /// Saddle-region receive power the regime was derived for.
    pub p_rx_min: f64,
    /// Receive-power ceiling the regime was derived for.
    pub p_rx_max: f64,
}

/// System parameters feeding [`NoiseRegime::derive`].
#[derive(Debug, Clone, Copy)]
pub struct RegimeInputs {
    pub mu: f64,
    pub gamma: f64,
    pub beta: f64,
    pub elements: usize,
    pub devices: usize,
    pub zeta: f64,
    pub nu: f64,
    pub sigma2: f64,
    pub kappa2: f64,
    pub p_rx_min: f64,
    pub p_rx_max: f64,
    /// Include the data-noise term `κ²/K` in `𝒱_min` (alternate convention;
    /// the default keeps the channel-only form).
    pub extended_v_min: bool,
}

impl NoiseRegime {
    pub fn derive(inp: &RegimeInputs) -> Result<Self> {
        if !(inp.mu > 0.0 && inp.gamma > 0.0 && inp.beta > 0.0) {
            return Err(AirPcaError::InvalidArgument("mu, gamma, beta must be positive".into()));
        }
        if inp.devices == 0 || inp.elements == 0 {
            return Err(AirPcaError::InvalidArgument("need devices and elements".into()));
        }
        if !(inp.zeta > 0.0 && inp.zeta <= 1.0) {
            return Err(AirPcaError::InvalidArgument("zeta must lie in (0, 1]".into()));
        }
        if !(inp.p_rx_min > 0.0 && inp.p_rx_max >= inp.p_rx_min) {
            return Err(AirPcaError::InvalidArgument("need 0 < p_rx_min <= p_rx_max".into()));
        }
        let k = inp.devices as f64;
        let c = inp.elements as f64;
        let channel = inp.nu * inp.nu * inp.sigma2;
        let v_max = inp.kappa2 / (k * inp.zeta)
            + 3.0 * channel / (k * k * inp.zeta * inp.zeta * inp.p_rx_min);
        let mut v_min = channel / (k * k * inp.p_rx_max);
        if inp.extended_v_min {
            v_min += inp.kappa2 / k;
        }
        if !(v_min > 0.0) {
            return Err(AirPcaError::InvalidArgument(
                "v_min must be positive (needs sigma2 > 0 and nu > 0)".into(),
            ));
        }
        let log_term = (6.0 * c * v_max / v_min + 1.0).ln();
        let n_max = (log_term / (2.0 * inp.mu * inp.gamma)).ceil().max(1.0) as usize;
        let rho = (2.0 * inp.beta * c / inp.gamma * log_term).min(1.0);
        Ok(Self { v_max, v_min, n_max, rho, p_rx_min: inp.p_rx_min, p_rx_max: inp.p_rx_max })
    }

    /// Raw constructor for tests and small studies; only the invariants are
    /// checked, not the defining formulas.
    pub fn from_parts(v_max: f64, v_min: f64, n_max: usize, rho: f64, p_rx_min: f64, p_rx_max: f64) -> Result<Self> {
        if !(v_min > 0.0 && v_max >= v_min) {
            return Err(AirPcaError::InvalidArgument("need v_max ≥ v_min > 0".into()));
        }
        if n_max == 0 {
            return Err(AirPcaError::InvalidArgument("n_max must be at least 1".into()));
        }
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(AirPcaError::InvalidArgument("rho must lie in (0, 1]".into()));
        }
        Ok(Self { v_max, v_min, n_max, rho, p_rx_min, p_rx_max })
    }
}

const LEMMA1_MAX_DEVICES: usize = 10_000;

/// Exact binomial expectations `f(K,ζ) = E[1/K_n]` and `h(K,ζ) = E[1/K_n²]`
/// for `K_n ~ B(K, ζ)` restricted to `K_n ≥ 1`, via a mode-anchored
/// probability recurrence that never under- or overflows.
pub fn lemma1_exact(devices: usize, zeta: f64) -> Result<(f64, f64)> {
    if devices == 0 {
        return Err(AirPcaError::InvalidArgument("device count must be at least 1".into()));
    }
    if devices > LEMMA1_MAX_DEVICES {
        return Err(AirPcaError::Scale(format!(
            "exact binomial summation supports K ≤ {LEMMA1_MAX_DEVICES}"
        )));
    }
    if !(zeta > 0.0 && zeta <= 1.0) {
        return Err(AirPcaError::InvalidArgument(format!("zeta must lie in (0, 1], got {zeta}")));
    }
    let k_count = devices;
    if zeta == 1.0 {
        let k = k_count as f64;
        return Ok((1.0 / k, 1.0 / (k * k)));
    }

    // Unnormalized pmf anchored at the mode: t(mode) = 1, neighbours by the
    // ratio P(k+1)/P(k) = ζ(K−k)/((1−ζ)(k+1)).
    let mode = (((k_count + 1) as f64) * zeta).floor().min(k_count as f64) as usize;
    let mut weights = vec![0.0f64; k_count + 1];
    weights[mode] = 1.0;
    for k in (0..mode).rev() {
        let ratio_up = zeta * (k_count - k) as f64 / ((1.0 - zeta) * (k + 1) as f64);
        weights[k] = weights[k + 1] / ratio_up;
    }
    for k in mode..k_count {
        let ratio_up = zeta * (k_count - k) as f64 / ((1.0 - zeta) * (k + 1) as f64);
        weights[k + 1] = weights[k] * ratio_up;
    }
    let total: f64 = weights.iter().sum();
    let mut f = 0.0;
    let mut h = 0.0;
    for k in 1..=k_count {
        let p = weights[k] / total;
        f += p / k as f64;
        h += p / (k * k) as f64;
    }
    Ok((f, h))
}

/// Lower bound on the expected `n`-round error reduction in a non-stationary
/// region: `nμ[ε²/2 − βcμκ²/(Kζ) − 3βcμν²σ²/((Kζ)²·P̄rx)]` with `P̄rx` the
/// harmonic mean of the receive powers.
#[allow(clippy::too_many_arguments)]
pub fn theorem1_bound(
    rounds: usize,
    mu: f64,
    consts: &SaddleConstants,
    elements: usize,
    devices: usize,
    zeta: f64,
    nu: f64,
    sigma2: f64,
    p_rx_seq: &[f64],
) -> Result<f64> {
    consts.validate()?;
    if mu > 1.0 / consts.beta {
        return Err(AirPcaError::Precondition(format!(
            "step size {mu} exceeds 1/beta = {}",
            1.0 / consts.beta
        )));
    }
    if rounds == 0 || p_rx_seq.len() != rounds {
        return Err(AirPcaError::InvalidArgument(format!(
            "need one receive power per round: {} given for {rounds} rounds",
            p_rx_seq.len()
        )));
    }
    if p_rx_seq.iter().any(|&p| !(p > 0.0)) {
        return Err(AirPcaError::InvalidArgument("receive powers must be positive".into()));
    }
    if !(zeta > 0.0 && zeta <= 1.0) {
        return Err(AirPcaError::InvalidArgument("zeta must lie in (0, 1]".into()));
    }
    let harmonic: f64 = rounds as f64 / p_rx_seq.iter().map(|p| 1.0 / p).sum::<f64>();
    let k_zeta = devices as f64 * zeta;
    let c = elements as f64;
    let data_term = consts.beta * c * mu * consts.kappa2 / k_zeta;
    let channel_term = 3.0 * consts.beta * c * mu * nu * nu * sigma2 / (k_zeta * k_zeta * harmonic);
    Ok(rounds as f64 * mu * (consts.epsilon * consts.epsilon / 2.0 - data_term - channel_term))
}

/// Both forms of the saddle-region descent bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem2Bound {
    /// The series form over the given receive-power sequence.
    pub series: f64,
    /// The `φ(μ,n)` closed form, present when the sequence is constant at the
    /// regime's saddle power. Always agrees with `series` to 1e-10 relative.
    pub closed_form: Option<f64>,
}

/// Lower bound on the expected `n`-round error reduction inside a saddle
/// region. Requires `μ ≤ 0.01/(c·𝒱_max)` and `n > N_max`.
#[allow(clippy::too_many_arguments)]
pub fn theorem2_bound(
    rounds: usize,
    mu: f64,
    regime: &NoiseRegime,
    consts: &SaddleConstants,
    elements: usize,
    devices: usize,
    zeta: f64,
    nu: f64,
    sigma2: f64,
    p_rx_seq: &[f64],
) -> Result<Theorem2Bound> {
    consts.validate()?;
    let c = elements as f64;
    if mu > 0.01 / (c * regime.v_max) {
        return Err(AirPcaError::Precondition(format!(
            "step size {mu} violates mu << 1/(c*Vmax) = {}",
            1.0 / (c * regime.v_max)
        )));
    }
    if rounds <= regime.n_max {
        return Err(AirPcaError::Precondition(format!(
            "need more rounds than N_max = {}, got {rounds}",
            regime.n_max
        )));
    }
    let tail = rounds - regime.n_max; // terms m = 0 .. n - N_max - 1
    if p_rx_seq.len() < tail {
        return Err(AirPcaError::InvalidArgument(format!(
            "receive-power sequence too short: {} < {tail}",
            p_rx_seq.len()
        )));
    }
    if !(zeta > 0.0 && zeta <= 1.0) {
        return Err(AirPcaError::InvalidArgument("zeta must lie in (0, 1]".into()));
    }

    let k = devices as f64;
    let channel = nu * nu * sigma2;
    let growth = 1.0 + mu * consts.gamma;
    let mut series_sum = 0.0;
    for (m, &p) in p_rx_seq.iter().take(tail).enumerate() {
        if !(p > 0.0) {
            return Err(AirPcaError::InvalidArgument("receive powers must be positive".into()));
        }
        series_sum += growth.powi(2 * (rounds - m - 1) as i32) * channel / (k * k * p);
    }
    let data_term = consts.kappa2 / (k * zeta);
    let floor_term = 3.0 * channel / (k * k * zeta * zeta * regime.p_rx_min);
    let series = mu / 4.0 * (data_term + mu * consts.gamma * series_sum + floor_term);

    let constant_at_min = p_rx_seq
        .iter()
        .take(tail)
        .all(|&p| (p - regime.p_rx_min).abs() <= 1e-12 * regime.p_rx_min);
    let closed_form = if constant_at_min {
        let phi = (growth.powi(2 * rounds as i32) - growth.powi(2 * regime.n_max as i32))
            / (2.0 + mu * consts.gamma);
        let value = mu / 4.0
            * (data_term + (phi + 3.0 / (zeta * zeta)) * channel / (k * k * regime.p_rx_min));
        if (value - series).abs() > 1e-10 * series.abs().max(f64::MIN_POSITIVE) {
            return Err(AirPcaError::Numerical(format!(
                "series ({series}) and closed form ({value}) disagree beyond 1e-10"
            )));
        }
        Some(value)
    } else {
        None
    };
    Ok(Theorem2Bound { series, closed_form })
}

/// Lower bound on the probability that an `N = m·N_max` round descent visits
/// the optimum region: `1 − 12B/((m+1)·μ·ρ·𝒱_max)`, clamped into `[0, 1]`.
pub fn theorem3_bound(total_rounds: usize, mu: f64, regime: &NoiseRegime, b_bound: f64) -> Result<f64> {
    if total_rounds == 0 || !total_rounds.is_multiple_of(regime.n_max) {
        return Err(AirPcaError::InvalidArgument(format!(
            "round count {total_rounds} must be a positive multiple of N_max = {}",
            regime.n_max
        )));
    }
    if !(mu > 0.0 && b_bound > 0.0) {
        return Err(AirPcaError::InvalidArgument("mu and B must be positive".into()));
    }
    let m = (total_rounds / regime.n_max) as f64;
    let raw = 1.0 - 12.0 * b_bound / ((m + 1.0) * mu * regime.rho * regime.v_max);
    Ok(raw.clamp(0.0, 1.0))
}

/// Empirical strict-saddle constants probed from random subspaces and the
/// constructed optimum/saddle points. All values are empirical lower bounds
/// on the true constants (`epsilon` is the smallest sampled gradient norm).
pub fn estimate_constants(
    shards: &[DeviceShard],
    d: usize,
    probe_count: usize,
    seed: u64,
) -> Result<SaddleConstants> {
    if probe_count < 10 {
        return Err(AirPcaError::InvalidArgument("need at least 10 probes".into()));
    }
    if shards.is_empty() {
        return Err(AirPcaError::InvalidArgument("no shards".into()));
    }
    let data = concat_shards(shards)?;
    let dim = data.dim();
    if d == 0 || d >= dim {
        return Err(AirPcaError::InvalidArgument(format!("need 0 < d < D, got d={d}, D={dim}")));
    }

    let mut rng = stream_rng(seed, crate::rng::stream::PROBE);
    let radius = 2.0 * (d as f64).sqrt();
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Subspace {
        let raw = DMatrix::from_fn(dim, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let scale = radius * rng.gen::<f64>().max(1e-3) / raw.norm();
        Subspace::new(raw * scale).expect("finite by construction")
    };

    let mut beta = 0.0f64;
    let mut kappa2 = 0.0f64;
    let mut b_bound = 0.0f64;
    let mut c_bound = 0.0f64;
    let mut epsilon = f64::INFINITY;
    let mut prev: Option<(Subspace, GradientMatrix)> = None;
    for _ in 0..probe_count {
        let w = draw(&mut rng);
        let locals: Vec<GradientMatrix> = shards.iter().map(|s| local_gradient(&w, s)).collect();
        let global = global_gradient(&locals)?;
        let f = objective(&w, &data)?;
        b_bound = b_bound.max(f.abs());
        c_bound = c_bound.max(global.norm());
        epsilon = epsilon.min(global.norm());
        let per_element = (dim * d) as f64;
        for local in &locals {
            let dev = (local.matrix() - global.matrix()).norm_squared() / per_element;
            kappa2 = kappa2.max(dev);
        }
        if let Some((w_prev, g_prev)) = &prev {
            let dw = (w.matrix() - w_prev.matrix()).norm();
            if dw > 1e-12 {
                beta = beta.max((global.matrix() - g_prev.matrix()).norm() / dw);
            }
        }
        prev = Some((w, global));
    }

    // Hessian Lipschitz constant from gradient-difference curvature probes.
    let mut chi = 0.0f64;
    for _ in 0..probe_count.min(40) {
        let w1 = draw(&mut rng);
        let w2 = draw(&mut rng);
        let mid = Subspace::new((w1.matrix() + w2.matrix()) / 2.0)?;
        let g1 = dataset_gradient(&w1, &data)?;
        let g2 = dataset_gradient(&w2, &data)?;
        let gm = dataset_gradient(&mid, &data)?;
        let dw = (w1.matrix() - w2.matrix()).norm();
        if dw > 1e-9 {
            // ‖g1 + g2 − 2g_mid‖ ≤ χ·‖w1 − w2‖²/4 for χ-Lipschitz Hessians.
            let second = (g1.matrix() + g2.matrix() - 2.0 * gm.matrix()).norm();
            chi = chi.max(4.0 * second / (dw * dw));
        }
    }

    // Curvature at the constructed optimum and skip-top saddle. Degenerate
    // selections fall back to an uncanonical eigenvector choice; curvature is
    // well defined on the whole stationary family.
    let tol = 1e-4 * (b_bound / dim as f64).max(1e-9);
    let optimum = stationary_point_lenient(&data, &StationaryPointSpec::dominant(d))?;
    let saddle = stationary_point_lenient(&data, &StationaryPointSpec::skip_top(d))?;
    let alpha = min_hessian_eigenvalue(&optimum, &data, tol)?.max(1e-12);
    let gamma = (-min_hessian_eigenvalue(&saddle, &data, tol)?).max(1e-12);
    let delta = 0.5 * (optimum.matrix() - saddle.matrix()).norm();

    let consts = SaddleConstants {
        alpha,
        gamma,
        epsilon: epsilon.max(1e-12),
        delta: delta.max(1e-12),
        beta: beta.max(1e-12),
        chi: chi.max(1e-12),
        b_bound: b_bound.max(1e-12),
        c_bound: c_bound.max(1e-12),
        kappa2: kappa2.max(1e-12),
    };
    consts.validate()?;
    Ok(consts)
}

// make_stationary_point, but degenerate spectra pick an arbitrary
// representative instead of failing.
fn stationary_point_lenient(data: &crate::dataset::DataMatrix, spec: &StationaryPointSpec) -> Result<Subspace> {
    match pca::make_stationary_point(data, spec) {
        Err(AirPcaError::DegenerateSpectrum(_)) => {
            let cov = data.covariance();
            let eig = cov.clone().symmetric_eigen();
            let mut order: Vec<usize> = (0..data.dim()).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
            let w = DMatrix::from_fn(data.dim(), spec.eigen_indices().len(), |r, c| {
                eig.eigenvectors[(r, order[spec.eigen_indices()[c]])]
            });
            Subspace::new(w)
        }
        other => other,
    }
}
