//! AirPCA: federated principal component analysis over a simulated
//! broadband multi-access channel.
//!
//! Devices hold shards of a global dataset and iteratively refine a shared
//! low-dimensional subspace by stochastic gradient descent. Local gradients
//! are analog-modulated and superposed over a fading uplink, so the server
//! receives a noisy global gradient. Channel noise, normally a nuisance, is
//! deliberately exploited: a region detector classifies the current descent
//! landscape (non-stationary / saddle / optimum) and a power controller
//! lowers receive power inside saddle regions to amplify the noise and kick
//! the iterate off the saddle, banking the power savings for later rounds.
//!
//! Crate layout:
//! - [`dataset`]: data synthesis/loading and uniform partitioning across devices
//! - [`pca`]: the reconstruction-error objective, gradients, SVD oracle and
//!   stationary-point utilities
//! - [`channel`]: fading, truncated channel inversion, over-the-air
//!   aggregation and de-normalization
//! - [`expint`]: the exponential integral used by the receive-power budget
//! - [`controller`]: online descent-region detection and power-saving ledger
//! - [`bounds`]: closed-form descent-speed bound evaluators plus Monte Carlo
//!   validators
//! - [`harness`]: config-driven experiment driver, sweeps and report output

// Validation guards write `!(x > 0.0)` on purpose: the negation also
// rejects NaN, which `x <= 0.0` lets through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod channel;
pub mod controller;
pub mod dataset;
pub mod error;
pub mod expint;
pub mod harness;
pub mod pca;
pub mod rng;

pub use error::{AirPcaError, Result};
