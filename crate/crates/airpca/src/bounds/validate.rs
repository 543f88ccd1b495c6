//! Monte Carlo validators pitting the closed-form bounds against the
//! simulator, emitted as structured records for `bounds_report.json`.
//!
//! The theorem validators measure their own constants from the realized
//! paths (smallest gradient norm as `ε`, largest element spread as `ν`,
//! largest per-element data-noise variance as `κ²`, doubled empirical `β`),
//! so every bound is evaluated with inputs the simulation actually honored.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{
    estimate_constants, lemma1_exact, theorem1_bound, theorem2_bound, NoiseRegime, RegimeInputs,
    SaddleConstants,
};
use crate::channel::{
    complex_len, complex_vectorize, compute_normalization, sample_channel, transmit_and_aggregate,
    ChannelConfig,
};
use crate::dataset::{concat_shards, partition, synthesize_spectrum_dataset, DeviceShard};
use crate::error::Result;
use crate::pca::{
    global_gradient, local_gradient, make_stationary_point, min_hessian_eigenvalue,
    objective_from_covariance, sgd_step, GradientMatrix, StationaryPointSpec, Subspace,
};
use crate::rng::{round_rng, stream};

/// One validation outcome: the evaluated bound, the Monte Carlo estimate with
/// its standard error, and the verdict.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationRecord {
    pub check: String,
    pub bound: Option<f64>,
    pub empirical_mean: Option<f64>,
    pub std_error: Option<f64>,
    pub verdict: String,
    pub detail: serde_json::Value,
}

impl ValidationRecord {
    pub fn passed(&self) -> bool {
        self.verdict == "pass"
    }
}

/// Validator effort knobs.
#[derive(Debug, Clone, Copy)]
pub struct ValidatorConfig {
    pub seed: u64,
    /// Monte Carlo paths per `theorem1_bound` parameter point.
    pub theorem1_paths: usize,
    /// Paired seeds for the `theorem2_bound` power comparison.
    pub theorem2_seeds: usize,
}

impl Default for ValidatorConfig {
    fn default() -> Self {
        Self { seed: 2024, theorem1_paths: 300, theorem2_seeds: 200 }
    }
}

/// Runs every validator and returns the report records.
pub fn run_all(cfg: &ValidatorConfig) -> Result<Vec<ValidationRecord>> {
    let mut records = vec![lemma1_grid(), theorem2_identity()?];
    records.extend(theorem1_monte_carlo(cfg)?);
    records.push(theorem2_noise_benefit(cfg)?);
    Ok(records)
}

/// `f(K,ζ) ≤ 2/(Kζ)` and `h(K,ζ) ≤ 6/(K²ζ²)` over the full grid.
pub fn lemma1_grid() -> ValidationRecord {
    let mut violations = 0usize;
    let mut worst_margin = f64::INFINITY;
    for devices in 1..=100usize {
        for step in 1..=10 {
            let zeta = step as f64 / 10.0;
            let (f, h) = lemma1_exact(devices, zeta).expect("grid parameters are valid");
            let f_cap = 2.0 / (devices as f64 * zeta);
            let h_cap = 6.0 / (devices as f64 * zeta).powi(2);
            if f > f_cap || h > h_cap {
                violations += 1;
            }
            worst_margin = worst_margin.min((f_cap - f) / f_cap).min((h_cap - h) / h_cap);
        }
    }
    ValidationRecord {
        check: "lemma1_grid".into(),
        bound: Some(0.0),
        empirical_mean: Some(violations as f64),
        std_error: None,
        verdict: if violations == 0 { "pass" } else { "fail" }.into(),
        detail: serde_json::json!({
            "grid": "K in [1,100] x zeta in {0.1..1.0}",
            "violations": violations,
            "worst_relative_margin": worst_margin,
        }),
    }
}

/// The series and `φ` forms of the saddle bound agree to 1e-10 relative.
pub fn theorem2_identity() -> Result<ValidationRecord> {
    let consts = SaddleConstants {
        alpha: 0.5,
        gamma: 2.0,
        epsilon: 0.4,
        delta: 0.3,
        beta: 6.0,
        chi: 12.0,
        b_bound: 40.0,
        c_bound: 15.0,
        kappa2: 2e-3,
    };
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for &(n_max, n, p_min) in &[(20usize, 60usize, 0.2f64), (50, 150, 0.05), (11, 400, 1.0)] {
        let regime = NoiseRegime::from_parts(5e-2, 1e-3, n_max, 0.9, p_min, 10.0 * p_min)?;
        let mu = (0.01 / (24.0 * regime.v_max)).min(1e-3);
        let powers = vec![regime.p_rx_min; n];
        let bound = theorem2_bound(n, mu, &regime, &consts, 24, 12, 0.8, 1.0, 0.05, &powers)?;
        let phi = bound.closed_form.expect("constant minimum-power sequence");
        worst = worst.max((bound.series - phi).abs() / bound.series.abs());
        checked += 1;
    }
    Ok(ValidationRecord {
        check: "theorem2_series_phi_identity".into(),
        bound: Some(1e-10),
        empirical_mean: Some(worst),
        std_error: None,
        verdict: if worst <= 1e-10 { "pass" } else { "fail" }.into(),
        detail: serde_json::json!({ "points": checked, "worst_relative_gap": worst }),
    })
}

// A fixed desk-size scenario shared by the theorem validators.
struct Scenario {
    shards: Vec<DeviceShard>,
    covariance: DMatrix<f64>,
    trace: f64,
    samples: usize,
    devices: usize,
    elements: usize,
    subspace_rank: usize,
    channel: ChannelConfig,
}

fn scenario(seed: u64, noise_var: f64, samples: usize, truncation: f64) -> Result<Scenario> {
    let dim = 12;
    let rank = 2;
    let devices = 12;
    let mut spectrum = vec![12.0, 4.0];
    while spectrum.len() < dim {
        spectrum.push(spectrum.last().unwrap() * 0.8);
    }
    let data = synthesize_spectrum_dataset(dim, samples, &spectrum, seed)?;
    let shards = partition(&data, devices, seed ^ 0xDA7A)?;
    let trimmed = concat_shards(&shards)?;
    let covariance = trimmed.covariance();
    let trace = covariance.trace();
    Ok(Scenario {
        shards,
        covariance,
        trace,
        samples: trimmed.len(),
        devices,
        elements: complex_len(dim, rank),
        subspace_rank: rank,
        channel: ChannelConfig {
            sub_channels: 64,
            truncation_threshold: truncation,
            noise_var,
            avg_tx_power: 400.0,
            outage_prob: 0.0,
        },
    })
}

// Per-element data-noise variance: max over elements of the device-mean
// squared deviation; this is exactly the κ² for which the conditional
// subset-average variance is ≤ κ²/k.
fn element_kappa2(locals: &[GradientMatrix], global: &GradientMatrix) -> f64 {
    let gvec = complex_vectorize(global);
    let mut worst = 0.0f64;
    let device_vecs: Vec<Vec<Complex64>> = locals.iter().map(complex_vectorize).collect();
    for i in 0..gvec.len() {
        let mean_sq: f64 = device_vecs.iter().map(|v| (v[i] - gvec[i]).norm_sqr()).sum::<f64>()
            / locals.len() as f64;
        worst = worst.max(mean_sq);
    }
    worst
}

struct PathStats {
    reduction: f64,
    min_grad_norm: f64,
    max_nu: f64,
    max_kappa2: f64,
    dead_elements: usize,
}

// One noisy descent path at constant receive power.
fn run_path(
    sc: &Scenario,
    start: &Subspace,
    mu: f64,
    p_rx: f64,
    rounds: usize,
    channel_seed: u64,
) -> Result<PathStats> {
    let mut w = start.clone();
    let f0 = objective_from_covariance(&w, &sc.covariance, sc.trace, sc.samples);
    let mut min_grad_norm = f64::INFINITY;
    let mut max_nu = 0.0f64;
    let mut max_kappa2 = 0.0f64;
    let mut dead = 0usize;
    for n in 0..rounds {
        let locals: Vec<GradientMatrix> =
            sc.shards.iter().map(|s| local_gradient(&w, s)).collect();
        let global = global_gradient(&locals)?;
        min_grad_norm = min_grad_norm.min(global.norm());
        max_kappa2 = max_kappa2.max(element_kappa2(&locals, &global));
        let stats = compute_normalization(&locals)?;
        max_nu = max_nu.max(stats.nu);
        let mut rng = round_rng(channel_seed, stream::CHANNEL, n as u64);
        let real = sample_channel(&sc.channel, sc.devices, sc.elements, &mut rng)?;
        let tx = transmit_and_aggregate(&locals, &stats, &real, p_rx)?;
        dead += tx.dead_elements;
        w = sgd_step(&w, &tx.noisy_gradient, mu)?;
    }
    let f_end = objective_from_covariance(&w, &sc.covariance, sc.trace, sc.samples);
    Ok(PathStats {
        reduction: f0 - f_end,
        min_grad_norm,
        max_nu,
        max_kappa2,
        dead_elements: dead,
    })
}

/// Non-stationary direction: at parameter points where `theorem1_bound` is
/// positive, the mean simulated error reduction must reach the bound minus
/// three standard errors.
///
/// The paths are kept short and far from stationarity so the realized
/// `ε = min‖g‖` stays large against the noise terms; the shards are big
/// enough that the data-noise `κ²` does not drown `ε²/2`.
pub fn theorem1_monte_carlo(cfg: &ValidatorConfig) -> Result<Vec<ValidationRecord>> {
    // (rounds, mu as fraction of 1/(2*beta_hat), noise variance, p_rx)
    let points: [(usize, f64, f64, f64); 6] = [
        (10, 0.10, 1e-3, 0.60),
        (10, 0.05, 1e-3, 0.60),
        (15, 0.10, 1e-3, 0.60),
        (10, 0.10, 0.10, 0.60),
        (10, 0.10, 0.50, 0.30),
        (12, 0.08, 0.05, 0.45),
    ];

    let mut records = Vec::with_capacity(points.len());
    for (idx, &(rounds, mu_frac, noise_var, p_rx)) in points.iter().enumerate() {
        let sc = scenario(cfg.seed, noise_var, 1200, 0.2)?;
        // Doubled empirical Lipschitz constant: the probe maxima are lower
        // bounds, the evaluated bound needs an upper bound.
        let probed = estimate_constants(&sc.shards, sc.subspace_rank, 60, cfg.seed ^ 0xBE7A)?;
        let beta = 2.0 * probed.beta;
        let mu = mu_frac / beta;

        // Start away from every stationary point: a scaled optimum.
        let trimmed = concat_shards(&sc.shards)?;
        let optimum = make_stationary_point(&trimmed, &StationaryPointSpec::dominant(sc.subspace_rank))?;
        let start = Subspace::new(optimum.matrix() * 0.55)?;

        let stats: Vec<PathStats> = (0..cfg.theorem1_paths)
            .into_par_iter()
            .map(|p| {
                run_path(&sc, &start, mu, p_rx, rounds, cfg.seed ^ ((idx as u64) << 32) ^ p as u64)
            })
            .collect::<Result<Vec<_>>>()?;

        let epsilon = stats.iter().map(|s| s.min_grad_norm).fold(f64::INFINITY, f64::min);
        let nu = stats.iter().map(|s| s.max_nu).fold(0.0, f64::max);
        let kappa2 = stats.iter().map(|s| s.max_kappa2).fold(0.0, f64::max);
        let dead: usize = stats.iter().map(|s| s.dead_elements).sum();

        let consts = SaddleConstants { beta, epsilon, kappa2: kappa2.max(1e-300), ..probed };
        let zeta = sc.channel.activation_probability();
        let powers = vec![p_rx; rounds];
        let bound = theorem1_bound(
            rounds,
            mu,
            &consts,
            sc.elements,
            sc.devices,
            zeta,
            nu,
            sc.channel.noise_var,
            &powers,
        )?;

        let n = stats.len() as f64;
        let mean = stats.iter().map(|s| s.reduction).sum::<f64>() / n;
        let var = stats.iter().map(|s| (s.reduction - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let pass = bound > 0.0 && mean >= bound - 3.0 * se;
        records.push(ValidationRecord {
            check: format!("theorem1_lower_bound_point{idx}"),
            bound: Some(bound),
            empirical_mean: Some(mean),
            std_error: Some(se),
            verdict: if pass { "pass" } else { "fail" }.into(),
            detail: serde_json::json!({
                "rounds": rounds,
                "mu": mu,
                "p_rx": p_rx,
                "noise_var": sc.channel.noise_var,
                "epsilon": epsilon,
                "kappa2": kappa2,
                "nu": nu,
                "paths": cfg.theorem1_paths,
                "dead_elements": dead,
            }),
        });
    }
    Ok(records)
}

/// Noise-benefit direction: starting on a saddle, the mean reduction over
/// `N_max` rounds is larger at the saddle floor power than at the cap
/// (paired one-sided test at 95%), and `theorem2_bound`'s two forms agree.
pub fn theorem2_noise_benefit(cfg: &ValidatorConfig) -> Result<ValidationRecord> {
    // Near-unity activation removes the power-independent dropout noise, so
    // the receive power is the only knob on the perturbation strength.
    let sc = scenario(cfg.seed ^ 0x5ADD1E, 0.5, 240, 0.001)?;
    let trimmed = concat_shards(&sc.shards)?;
    let saddle = make_stationary_point(&trimmed, &StationaryPointSpec::skip_top(sc.subspace_rank))?;

    // Constants measured at the saddle.
    let locals: Vec<GradientMatrix> = sc.shards.iter().map(|s| local_gradient(&saddle, s)).collect();
    let global = global_gradient(&locals)?;
    let stats0 = compute_normalization(&locals)?;
    let kappa2 = element_kappa2(&locals, &global).max(1e-300);
    let gamma = -min_hessian_eigenvalue(&saddle, &trimmed, 1e-3)?;
    if gamma <= 0.0 {
        return Err(crate::error::AirPcaError::Numerical(
            "constructed point has no negative curvature".into(),
        ));
    }

    let p_rx_max = 1.0;
    let p_rx_min = 0.05;
    let zeta = sc.channel.activation_probability();
    let probed = estimate_constants(&sc.shards, sc.subspace_rank, 40, cfg.seed ^ 0xFACE)?;
    let regime = NoiseRegime::derive(&RegimeInputs {
        mu: 1.0, // placeholder, fixed below once mu is known
        gamma,
        beta: 2.0 * probed.beta,
        elements: sc.elements,
        devices: sc.devices,
        zeta,
        nu: stats0.nu,
        sigma2: sc.channel.noise_var,
        kappa2,
        p_rx_min,
        p_rx_max,
        extended_v_min: false,
    })?;
    let mu = 0.009 / (sc.elements as f64 * regime.v_max);
    let regime = NoiseRegime::derive(&RegimeInputs {
        mu,
        gamma,
        beta: 2.0 * probed.beta,
        elements: sc.elements,
        devices: sc.devices,
        zeta,
        nu: stats0.nu,
        sigma2: sc.channel.noise_var,
        kappa2,
        p_rx_min,
        p_rx_max,
        extended_v_min: false,
    })?;
    let horizon = regime.n_max;

    let diffs: Vec<(f64, f64)> = (0..cfg.theorem2_seeds)
        .into_par_iter()
        .map(|s| {
            let seed = cfg.seed ^ 0x7E02 ^ ((s as u64) << 16);
            let low = run_path(&sc, &saddle, mu, p_rx_min, horizon, seed)?;
            let high = run_path(&sc, &saddle, mu, p_rx_max, horizon, seed)?;
            Ok((low.reduction, high.reduction))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = diffs.len() as f64;
    let mean_low = diffs.iter().map(|d| d.0).sum::<f64>() / n;
    let mean_high = diffs.iter().map(|d| d.1).sum::<f64>() / n;
    let paired: Vec<f64> = diffs.iter().map(|d| d.0 - d.1).collect();
    let mean_diff = paired.iter().sum::<f64>() / n;
    let var_diff = paired.iter().map(|d| (d - mean_diff).powi(2)).sum::<f64>() / (n - 1.0);
    let se_diff = (var_diff / n).sqrt();
    // One-sided z test at 95%.
    let pass = mean_diff > 1.645 * se_diff;

    Ok(ValidationRecord {
        check: "theorem2_noise_benefit".into(),
        bound: Some(0.0),
        empirical_mean: Some(mean_diff),
        std_error: Some(se_diff),
        verdict: if pass { "pass" } else { "fail" }.into(),
        detail: serde_json::json!({
            "seeds": cfg.theorem2_seeds,
            "horizon_n_max": horizon,
            "mu": mu,
            "gamma": gamma,
            "p_rx_min": p_rx_min,
            "p_rx_max": p_rx_max,
            "mean_reduction_low_power": mean_low,
            "mean_reduction_high_power": mean_high,
            "z_score": mean_diff / se_diff.max(1e-300),
        }),
    })
}
