//! The PCA objective, its gradients, the centralized SVD oracle, and
//! stationary-point construction for saddle-escape experiments.
//!
//! The objective is the mean squared reconstruction error
//! `F(W) = (1/L) Σ_i ‖x_i − W Wᵀ x_i‖²`. Descent runs on the unconstrained
//! problem, so `WᵀW = I` is deliberately not enforced; every stationary point
//! is of the form `U_S Q` for a selection of covariance eigenvectors `U_S`
//! and a unitary `Q`, and all of them except the dominant selection are
//! saddle points.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{DataMatrix, DeviceShard};
use crate::error::{AirPcaError, Result};

/// The `D × d` principal-component estimate; the optimization variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    w: DMatrix<f64>,
}

impl Subspace {
    pub fn new(w: DMatrix<f64>) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite()) {
            return Err(AirPcaError::Numerical("subspace contains non-finite entries".into()));
        }
        Ok(Self { w })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn rank(&self) -> usize {
        self.w.ncols()
    }

    pub fn norm(&self) -> f64 {
        self.w.norm()
    }
}

/// Gradient of the objective with respect to the subspace; same shape as `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMatrix {
    g: DMatrix<f64>,
}

impl GradientMatrix {
    pub fn new(g: DMatrix<f64>) -> Self {
        Self { g }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn norm(&self) -> f64 {
        self.g.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.g.iter().all(|v| v.is_finite())
    }
}

/// Selects which covariance eigenvectors (by descending-eigenvalue index)
/// span a stationary point, optionally rotated by a unitary `Q`.
#[derive(Debug, Clone)]
pub struct StationaryPointSpec {
    eigen_indices: Vec<usize>,
    rotation: Option<DMatrix<f64>>,
}

impl StationaryPointSpec {
    pub fn new(mut eigen_indices: Vec<usize>, rotation: Option<DMatrix<f64>>) -> Result<Self> {
        eigen_indices.sort_unstable();
        let before = eigen_indices.len();
        eigen_indices.dedup();
        if eigen_indices.len() != before || eigen_indices.is_empty() {
            return Err(AirPcaError::InvalidArgument(
                "eigen indices must be distinct and non-empty".into(),
            ));
        }
        if let Some(q) = &rotation {
            if q.nrows() != eigen_indices.len() || q.ncols() != eigen_indices.len() {
                return Err(AirPcaError::ShapeMismatch(format!(
                    "rotation must be {0}×{0}",
                    eigen_indices.len()
                )));
            }
            let gram = q.transpose() * q;
            let eye = DMatrix::identity(q.ncols(), q.ncols());
            if (gram - eye).norm() > 1e-10 {
                return Err(AirPcaError::InvalidArgument("rotation is not unitary".into()));
            }
        }
        Ok(Self { eigen_indices, rotation })
    }

    /// Indices `{0, …, d−1}`: the dominant selection (the global optimum).
    pub fn dominant(d: usize) -> Self {
        Self { eigen_indices: (0..d).collect(), rotation: None }
    }

    /// Indices `{1, …, d}`: the classic skip-top saddle.
    pub fn skip_top(d: usize) -> Self {
        Self { eigen_indices: (1..=d).collect(), rotation: None }
    }

    pub fn eigen_indices(&self) -> &[usize] {
        &self.eigen_indices
    }
}

/// `W_0 = [I_d, 0]ᵀ`, the default descent initialization.
pub fn identity_subspace(dim: usize, rank: usize) -> Subspace {
    let mut w = DMatrix::zeros(dim, rank);
    for j in 0..rank.min(dim) {
        w[(j, j)] = 1.0;
    }
    Subspace { w }
}

/// `F(W) = (1/L) Σ_i ‖x_i − W Wᵀ x_i‖²`.
pub fn objective(w: &Subspace, data: &DataMatrix) -> Result<f64> {
    if w.dim() != data.dim() {
        return Err(AirPcaError::ShapeMismatch(format!(
            "subspace dimension {} vs data dimension {}",
            w.dim(),
            data.dim()
        )));
    }
    let x = data.samples();
    let projected = w.matrix() * (w.matrix().transpose() * x);
    let residual = x - projected;
    Ok(residual.norm_squared() / data.len() as f64)
}

/// Same value as [`objective`] computed from the cached covariance:
/// `F(W) = [tr R − 2 tr(WᵀRW) + tr((WᵀW)(WᵀRW))] / L`. This is the hot-path
/// form used by the run loop; it agrees with the direct form to roundoff.
pub fn objective_from_covariance(w: &Subspace, covariance: &DMatrix<f64>, trace: f64, samples: usize) -> f64 {
    let rw = covariance * w.matrix();
    let wt_rw = w.matrix().transpose() * &rw;
    let gram = w.matrix().transpose() * w.matrix();
    let quad = wt_rw.trace();
    let quart = (gram * wt_rw).trace();
    (trace - 2.0 * quad + quart) / samples as f64
}

// Shared gradient kernel: (2/count) [−2R + RWWᵀ + WWᵀR] W, with R given.
fn gradient_from_covariance(w: &DMatrix<f64>, covariance: &DMatrix<f64>, count: usize) -> DMatrix<f64> {
    let s = covariance * w; // R W
    let gram = w.transpose() * w; // WᵀW
    let wt_s = w.transpose() * &s; // WᵀRW
    let mut g = &s * gram;
    g += w * wt_s;
    g -= 2.0 * s;
    g * (2.0 / count as f64)
}

/// Full-batch local gradient `(2/ℓ0)[−2R_k + R_kWWᵀ + WWᵀR_k]W`.
pub fn local_gradient(w: &Subspace, shard: &DeviceShard) -> GradientMatrix {
    GradientMatrix::new(gradient_from_covariance(w.matrix(), shard.covariance(), shard.len()))
}

/// Local gradient on an explicit mini-batch of column indices into the shard.
pub fn local_gradient_for_batch(w: &Subspace, shard: &DeviceShard, batch: &[usize]) -> Result<GradientMatrix> {
    if batch.is_empty() {
        return Err(AirPcaError::InvalidArgument("batch size must be positive".into()));
    }
    if batch.iter().any(|&i| i >= shard.len()) {
        return Err(AirPcaError::InvalidArgument("batch index out of range".into()));
    }
    let x = shard.local_data();
    let sub = DMatrix::from_fn(x.nrows(), batch.len(), |i, j| x[(i, batch[j])]);
    let cov = &sub * sub.transpose();
    Ok(GradientMatrix::new(gradient_from_covariance(w.matrix(), &cov, batch.len())))
}

/// Local gradient on a uniformly sampled mini-batch of `batch_size` samples
/// (without replacement). `batch_size = None` means full batch.
pub fn local_gradient_sampled<R: Rng>(
    w: &Subspace,
    shard: &DeviceShard,
    batch_size: Option<usize>,
    rng: &mut R,
) -> Result<GradientMatrix> {
    match batch_size {
        None => Ok(local_gradient(w, shard)),
        Some(0) => Err(AirPcaError::InvalidArgument("batch size must be positive".into())),
        Some(b) if b > shard.len() => Err(AirPcaError::InvalidArgument(format!(
            "batch size {b} exceeds shard size {}",
            shard.len()
        ))),
        Some(b) if b == shard.len() => Ok(local_gradient(w, shard)),
        Some(b) => {
            let mut indices: Vec<usize> = (0..shard.len()).collect();
            indices.shuffle(rng);
            indices.truncate(b);
            local_gradient_for_batch(w, shard, &indices)
        }
    }
}

/// Arithmetic mean of local gradients, `(1/K) Σ_k ∇F_k(W)`.
pub fn global_gradient(gradients: &[GradientMatrix]) -> Result<GradientMatrix> {
    let first = gradients
        .first()
        .ok_or_else(|| AirPcaError::InvalidArgument("gradient list is empty".into()))?;
    let shape = first.matrix().shape();
    let mut acc = DMatrix::zeros(shape.0, shape.1);
    for g in gradients {
        if g.matrix().shape() != shape {
            return Err(AirPcaError::ShapeMismatch("gradients have mixed shapes".into()));
        }
        acc += g.matrix();
    }
    Ok(GradientMatrix::new(acc / gradients.len() as f64))
}

/// One descent step `W ← W − μ·ĝ`.
pub fn sgd_step(w: &Subspace, noisy_gradient: &GradientMatrix, mu: f64) -> Result<Subspace> {
    if mu <= 0.0 || !mu.is_finite() {
        return Err(AirPcaError::InvalidArgument(format!("step size must be positive, got {mu}")));
    }
    if !noisy_gradient.is_finite() {
        return Err(AirPcaError::Numerical("gradient contains non-finite entries".into()));
    }
    if noisy_gradient.matrix().shape() != w.matrix().shape() {
        return Err(AirPcaError::ShapeMismatch("gradient shape differs from subspace".into()));
    }
    Subspace::new(w.matrix() - mu * noisy_gradient.matrix())
}

/// Result of the centralized SVD baseline.
#[derive(Debug, Clone)]
pub struct CentralizedPca {
    pub subspace: Subspace,
    pub objective: f64,
    /// Set when `d` exceeds the numerical rank of the data, in which case the
    /// trailing columns are null-space vectors.
    pub rank_deficient: bool,
}

// Eigen-pairs of a symmetric matrix sorted by descending eigenvalue.
fn sorted_eigen(sym: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = sym.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(sym.nrows(), sym.nrows(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// The oracle baseline: the `d` dominant eigenvectors of `X Xᵀ` and the
/// objective value they attain.
pub fn centralized_pca(data: &DataMatrix, d: usize) -> Result<CentralizedPca> {
    if d == 0 || d > data.dim().min(data.len()) {
        return Err(AirPcaError::InvalidArgument(format!(
            "d={d} must lie in [1, min(D, L)] = [1, {}]",
            data.dim().min(data.len())
        )));
    }
    let cov = data.covariance();
    let (values, vectors) = sorted_eigen(&cov);
    let scale = values[0].abs().max(1.0);
    let rank = values.iter().filter(|&&v| v > 1e-12 * scale).count();
    let w = DMatrix::from_fn(data.dim(), d, |r, c| vectors[(r, c)]);
    let subspace = Subspace::new(w)?;
    let objective = objective(&subspace, data)?;
    Ok(CentralizedPca { subspace, objective, rank_deficient: d > rank })
}

/// Builds the exact stationary point `W = U_S Q` from the covariance
/// eigenvectors at the requested descending-order indices.
///
/// Rejects selections whose boundary eigenvalues are numerically repeated,
/// because then the stationary subspace is not uniquely determined.
pub fn make_stationary_point(data: &DataMatrix, spec: &StationaryPointSpec) -> Result<Subspace> {
    let indices = spec.eigen_indices();
    let max_index = *indices.iter().max().unwrap();
    if max_index >= data.dim() {
        return Err(AirPcaError::InvalidArgument(format!(
            "eigen index {max_index} out of range for D={}",
            data.dim()
        )));
    }
    let cov = data.covariance();
    let (values, vectors) = sorted_eigen(&cov);
    let scale = values[0].abs().max(1.0);

    // A selected eigenvalue equal to an unselected one makes U_S ambiguous.
    let selected: Vec<bool> = {
        let mut s = vec![false; data.dim()];
        for &i in indices {
            s[i] = true;
        }
        s
    };
    for &i in indices {
        for (j, &is_sel) in selected.iter().enumerate() {
            if !is_sel && (values[i] - values[j]).abs() <= 1e-9 * scale {
                return Err(AirPcaError::DegenerateSpectrum(format!(
                    "eigenvalues at indices {i} and {j} coincide ({} vs {})",
                    values[i], values[j]
                )));
            }
        }
    }

    let mut w = DMatrix::from_fn(data.dim(), indices.len(), |r, c| vectors[(r, indices[c])]);
    if let Some(q) = &spec.rotation {
        w *= q;
    }
    Subspace::new(w)
}

/// Gradient of the global objective evaluated directly on a dataset.
pub fn dataset_gradient(w: &Subspace, data: &DataMatrix) -> Result<GradientMatrix> {
    if w.dim() != data.dim() {
        return Err(AirPcaError::ShapeMismatch("subspace vs data dimension".into()));
    }
    let cov = data.covariance();
    Ok(GradientMatrix::new(gradient_from_covariance(w.matrix(), &cov, data.len())))
}

const HESSIAN_PROBLEM_CAP: usize = 500;
const POWER_ITERATION_CAP: usize = 20_000;

/// Estimates `λ_min` of `∇²F` at `W` via finite-difference Hessian-vector
/// products and shifted power iteration, to additive tolerance `tol`.
///
/// Test-support only; the problem size is capped at `D·d ≤ 500`.
pub fn min_hessian_eigenvalue(w: &Subspace, data: &DataMatrix, tol: f64) -> Result<f64> {
    let n = w.dim() * w.rank();
    if n > HESSIAN_PROBLEM_CAP {
        return Err(AirPcaError::Scale(format!(
            "Hessian probing supports D·d ≤ {HESSIAN_PROBLEM_CAP}, got {n}"
        )));
    }
    if tol <= 0.0 {
        return Err(AirPcaError::InvalidArgument("tolerance must be positive".into()));
    }
    let cov = data.covariance();
    let samples = data.len();
    let (rows, cols) = w.matrix().shape();
    let step = 1e-5 * w.norm().max(1.0);

    let hvp = |v: &DVector<f64>| -> DVector<f64> {
        let dir = DMatrix::from_column_slice(rows, cols, v.as_slice());
        let plus = w.matrix() + step * &dir;
        let minus = w.matrix() - step * &dir;
        let g_plus = gradient_from_covariance(&plus, &cov, samples);
        let g_minus = gradient_from_covariance(&minus, &cov, samples);
        let diff = (g_plus - g_minus) / (2.0 * step);
        DVector::from_column_slice(diff.as_slice())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(0xE16E);
    let mut v = random_unit_vector(n, &mut rng);

    // Upper bound on the spectral radius from the growth of ‖Hv‖.
    let mut radius = 0.0f64;
    for _ in 0..40 {
        let hv = hvp(&v);
        let norm = hv.norm();
        if norm < 1e-14 {
            return Ok(0.0); // zero Hessian (e.g. all-zero data)
        }
        radius = radius.max(norm / v.norm());
        v = hv / norm;
    }
    let shift = 1.5 * radius;

    // Power iteration on (shift·I − H): its dominant eigenvalue is shift − λ_min.
    let mut v = random_unit_vector(n, &mut rng);
    let mut prev = f64::INFINITY;
    for _ in 0..POWER_ITERATION_CAP {
        let bv = shift * &v - hvp(&v);
        let norm = bv.norm();
        if norm < 1e-14 {
            v = random_unit_vector(n, &mut rng);
            continue;
        }
        let next = bv / norm;
        // The iterate converges to the λ_min eigenvector of H, so its
        // Rayleigh quotient under H estimates λ_min directly.
        let rayleigh = next.dot(&hvp(&next));
        if (rayleigh - prev).abs() < 0.5 * tol {
            return Ok(rayleigh);
        }
        prev = rayleigh;
        v = next;
    }
    Err(AirPcaError::Convergence { iterations: POWER_ITERATION_CAP, best_estimate: prev })
}

fn random_unit_vector<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-9 {
            return v / norm;
        }
    }
}
