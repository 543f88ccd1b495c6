//! Config-driven experiment driver wiring dataset → pca → channel →
//! controller into the per-round loop, plus sweeps and report output.

pub mod config;
pub mod run;
pub mod sweep;

pub use config::{ExperimentConfig, Variant};
pub use run::{latency_to_target, metrics_to_csv, run, RoundMetrics, RunSummary, METRICS_CSV_HEADER};
pub use sweep::{sweep, SweepTable};
