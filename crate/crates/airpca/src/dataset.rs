//! Dataset ingestion, synthesis and uniform partitioning across devices.
//!
//! Every device holds an equal-size shard of the global sample matrix and a
//! precomputed local covariance. Shards are immutable after construction and
//! safe to share across concurrent runs.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{AirPcaError, Result};
use crate::rng::stream_rng;

/// Global data matrix with samples as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    samples: DMatrix<f64>,
}

impl DataMatrix {
    /// Wraps a `D × L` matrix of samples; rejects non-finite entries.
    pub fn new(samples: DMatrix<f64>) -> Result<Self> {
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(AirPcaError::Numerical(
                "data matrix contains non-finite entries".into(),
            ));
        }
        Ok(Self { samples })
    }

    /// Data dimension `D`.
    pub fn dim(&self) -> usize {
        self.samples.nrows()
    }

    /// Sample count `L`.
    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    pub fn samples(&self) -> &DMatrix<f64> {
        &self.samples
    }

    /// Unnormalized global covariance `X Xᵀ`.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.samples * self.samples.transpose()
    }

    /// Subtracts the per-feature mean in place (exploration only; the
    /// objective is defined on uncentered data).
    pub fn center(&mut self) {
        let l = self.len();
        if l == 0 {
            return;
        }
        let mean = self.samples.column_mean();
        for mut col in self.samples.column_iter_mut() {
            col -= &mean;
        }
    }
}

/// One device's shard: local samples plus the cached covariance `R_k = X_k X_kᵀ`.
#[derive(Debug, Clone)]
pub struct DeviceShard {
    device_id: usize,
    local_data: DMatrix<f64>,
    covariance: DMatrix<f64>,
}

impl DeviceShard {
    fn from_columns(device_id: usize, local_data: DMatrix<f64>) -> Self {
        let covariance = &local_data * local_data.transpose();
        Self { device_id, local_data, covariance }
    }

    pub fn device_id(&self) -> usize {
        self.device_id
    }

    pub fn local_data(&self) -> &DMatrix<f64> {
        &self.local_data
    }

    /// Cached `R_k = X_k X_kᵀ`.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Local sample count `ℓ0`.
    pub fn len(&self) -> usize {
        self.local_data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.local_data.ncols() == 0
    }
}

const IDX3_IMAGE_MAGIC: u32 = 0x0000_0803;
const MNIST_SIDE: usize = 28;

/// Loads an IDX3 image file (big-endian magic `0x00000803`, dims `[N, 28, 28]`)
/// into a `784 × min(N, max_samples)` matrix with pixels scaled into `[0, 1]`.
///
/// Images are flattened row-major. `max_samples > N` loads all `N` images and
/// warns; `max_samples == 0` is rejected.
pub fn load_mnist_idx(path: &Path, max_samples: usize) -> Result<DataMatrix> {
    if max_samples == 0 {
        return Err(AirPcaError::EmptyDataset(
            "max_samples must be at least 1".into(),
        ));
    }
    let mut file = File::open(path)?;
    let mut header = [0u8; 16];
    file.read_exact(&mut header)?;

    let magic = u32::from_be_bytes(header[0..4].try_into().unwrap());
    if magic != IDX3_IMAGE_MAGIC {
        return Err(AirPcaError::Format(format!(
            "bad IDX3 magic: expected {IDX3_IMAGE_MAGIC:#010x}, got {magic:#010x}"
        )));
    }
    let count = u32::from_be_bytes(header[4..8].try_into().unwrap()) as usize;
    let rows = u32::from_be_bytes(header[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_be_bytes(header[12..16].try_into().unwrap()) as usize;
    if rows != MNIST_SIDE || cols != MNIST_SIDE {
        return Err(AirPcaError::Format(format!(
            "expected {MNIST_SIDE}x{MNIST_SIDE} images, file declares {rows}x{cols}"
        )));
    }
    if count == 0 {
        return Err(AirPcaError::EmptyDataset("IDX3 file holds zero images".into()));
    }

    let take = if max_samples > count {
        eprintln!(
            "warning: requested {max_samples} samples but file holds only {count}; loading all {count}"
        );
        count
    } else {
        max_samples
    };

    let dim = MNIST_SIDE * MNIST_SIDE;
    let mut pixels = vec![0u8; dim * take];
    file.read_exact(&mut pixels)?;

    // Column j of the output is image j flattened row-major, scaled by 1/255.
    let samples = DMatrix::from_fn(dim, take, |i, j| f64::from(pixels[j * dim + i]) / 255.0);
    DataMatrix::new(samples)
}

/// Synthesizes `L` samples whose population covariance has the requested
/// eigenvalue spectrum: `x = U · diag(√spectrum) · g` with `g` standard normal
/// and `U` a seeded random orthogonal matrix.
///
/// `spectrum` must be non-increasing with non-negative entries; the empirical
/// eigenvalues of `X Xᵀ / L` converge to it as `L → ∞`.
pub fn synthesize_spectrum_dataset(
    dim: usize,
    samples: usize,
    spectrum: &[f64],
    seed: u64,
) -> Result<DataMatrix> {
    if dim == 0 || samples == 0 {
        return Err(AirPcaError::InvalidArgument(
            "dimension and sample count must be positive".into(),
        ));
    }
    if spectrum.len() != dim {
        return Err(AirPcaError::InvalidArgument(format!(
            "spectrum has {} entries, expected D={dim}",
            spectrum.len()
        )));
    }
    if spectrum.iter().any(|&s| !s.is_finite() || s < 0.0) {
        return Err(AirPcaError::InvalidArgument(
            "spectrum entries must be finite and non-negative".into(),
        ));
    }
    if spectrum.windows(2).any(|w| w[0] < w[1]) {
        return Err(AirPcaError::InvalidArgument(
            "spectrum must be sorted non-increasing".into(),
        ));
    }

    let mut rng = stream_rng(seed, crate::rng::stream::DATASET);
    let basis = random_orthogonal(dim, &mut rng);
    let scale: Vec<f64> = spectrum.iter().map(|s| s.sqrt()).collect();

    // x = U · diag(√spectrum) · g, drawn column by column.
    let mut data = DMatrix::zeros(dim, samples);
    for j in 0..samples {
        let scaled = nalgebra::DVector::from_iterator(
            dim,
            scale.iter().map(|s| s * rng.sample::<f64, _>(StandardNormal)),
        );
        data.set_column(j, &(&basis * scaled));
    }
    DataMatrix::new(data)
}

/// Random orthogonal matrix from the QR decomposition of a Gaussian matrix,
/// with the sign convention fixed by the diagonal of R.
fn random_orthogonal<R: Rng>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let gauss = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = gauss.qr();
    let r_diag: Vec<f64> = (0..dim).map(|i| qr.r()[(i, i)]).collect();
    let mut q = qr.q();
    for (k, d) in r_diag.iter().enumerate() {
        if *d < 0.0 {
            for i in 0..dim {
                q[(i, k)] = -q[(i, k)];
            }
        }
    }
    q
}

/// Randomly permutes the samples and splits them into `K` equal shards of
/// `ℓ0 = ⌊L/K⌋`; leftover samples are discarded. Each shard's covariance is
/// computed once here.
pub fn partition(data: &DataMatrix, devices: usize, seed: u64) -> Result<Vec<DeviceShard>> {
    if devices == 0 {
        return Err(AirPcaError::InvalidArgument("device count must be positive".into()));
    }
    let total = data.len();
    if total < devices {
        return Err(AirPcaError::InvalidArgument(format!(
            "cannot split {total} samples across {devices} devices"
        )));
    }
    let per_device = total / devices;

    let mut order: Vec<usize> = (0..total).collect();
    let mut rng = stream_rng(seed, crate::rng::stream::PARTITION);
    order.shuffle(&mut rng);

    let mut shards = Vec::with_capacity(devices);
    for k in 0..devices {
        let cols = &order[k * per_device..(k + 1) * per_device];
        let local = DMatrix::from_fn(data.dim(), per_device, |i, j| data.samples()[(i, cols[j])]);
        shards.push(DeviceShard::from_columns(k, local));
    }
    Ok(shards)
}

/// Concatenates shards back into the trimmed global matrix (`L = K·ℓ0`
/// columns, in shard order).
pub fn concat_shards(shards: &[DeviceShard]) -> Result<DataMatrix> {
    if shards.is_empty() {
        return Err(AirPcaError::InvalidArgument("no shards to concatenate".into()));
    }
    let dim = shards[0].local_data().nrows();
    let total: usize = shards.iter().map(|s| s.len()).sum();
    let mut data = DMatrix::zeros(dim, total);
    let mut offset = 0;
    for shard in shards {
        data.view_mut((0, offset), (dim, shard.len()))
            .copy_from(shard.local_data());
        offset += shard.len();
    }
    DataMatrix::new(data)
}
