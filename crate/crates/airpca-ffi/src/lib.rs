//! C ABI for the AirPCA simulator.
//!
//! One experiment maps to one opaque [`AirpcaRun`] handle created from a JSON
//! configuration (the same schema the `airpca` CLI reads). Results come back
//! as allocated C strings (the `metrics.csv` content and the summary JSON)
//! that the caller releases with [`airpca_string_free`]. All functions return
//! an [`AirpcaStatus`] code and never unwind across the boundary.

use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use airpca::bounds::validate::{run_all, ValidatorConfig};
use airpca::channel::{max_avg_receive_power, ChannelConfig};
use airpca::expint::exponential_integral;
use airpca::harness::config::ExperimentConfig;
use airpca::harness::run::{metrics_to_csv, run, RoundMetrics, RunSummary};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AirpcaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    RuntimeError = 4,
    InvalidArgument = 5,
    Panic = 6,
}

/// Opaque handle to one completed experiment.
pub struct AirpcaRun {
    metrics: Vec<RoundMetrics>,
    summary: RunSummary,
}

fn guard<F: FnOnce() -> AirpcaStatus>(f: F) -> AirpcaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => AirpcaStatus::Panic,
    }
}

unsafe fn read_utf8<'a>(ptr: *const c_char) -> Result<&'a str, AirpcaStatus> {
    if ptr.is_null() {
        return Err(AirpcaStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| AirpcaStatus::InvalidUtf8)
}

fn export_string(text: String, out: *mut *mut c_char) -> AirpcaStatus {
    match CString::new(text) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            AirpcaStatus::Ok
        }
        Err(_) => AirpcaStatus::RuntimeError,
    }
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn airpca_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Executes the experiment described by a JSON configuration and hands back
/// an owned run handle.
///
/// # Safety
/// `config_json` must be a valid NUL-terminated string and `out_run` a valid
/// pointer; the handle must be released with [`airpca_run_free`].
#[no_mangle]
pub unsafe extern "C" fn airpca_run_execute(
    config_json: *const c_char,
    out_run: *mut *mut AirpcaRun,
) -> AirpcaStatus {
    guard(|| {
        if out_run.is_null() {
            return AirpcaStatus::NullPointer;
        }
        let text = match read_utf8(config_json) {
            Ok(t) => t,
            Err(status) => return status,
        };
        let cfg = match ExperimentConfig::from_json(text) {
            Ok(c) => c,
            Err(_) => return AirpcaStatus::InvalidConfig,
        };
        match run(&cfg) {
            Ok((metrics, summary)) => {
                let handle = Box::new(AirpcaRun { metrics, summary });
                *out_run = Box::into_raw(handle);
                AirpcaStatus::Ok
            }
            Err(_) => AirpcaStatus::RuntimeError,
        }
    })
}

/// Number of executed rounds (metric rows) in the run.
///
/// # Safety
/// `run` must be a live handle from [`airpca_run_execute`] (may be NULL,
/// yielding 0).
#[no_mangle]
pub unsafe extern "C" fn airpca_run_round_count(run: *const AirpcaRun) -> usize {
    if run.is_null() {
        0
    } else {
        (*run).metrics.len()
    }
}

/// Renders the run's metrics in the frozen `metrics.csv` column order.
///
/// # Safety
/// `run` must be a live handle and `out_csv` valid; free the result with
/// [`airpca_string_free`].
#[no_mangle]
pub unsafe extern "C" fn airpca_run_metrics_csv(
    run: *const AirpcaRun,
    out_csv: *mut *mut c_char,
) -> AirpcaStatus {
    guard(|| {
        if run.is_null() || out_csv.is_null() {
            return AirpcaStatus::NullPointer;
        }
        export_string(metrics_to_csv(&(*run).metrics), out_csv)
    })
}

/// Renders the run summary as JSON.
///
/// # Safety
/// `run` must be a live handle and `out_json` valid; free the result with
/// [`airpca_string_free`].
#[no_mangle]
pub unsafe extern "C" fn airpca_run_summary_json(
    run: *const AirpcaRun,
    out_json: *mut *mut c_char,
) -> AirpcaStatus {
    guard(|| {
        if run.is_null() || out_json.is_null() {
            return AirpcaStatus::NullPointer;
        }
        match serde_json::to_string_pretty(&(*run).summary) {
            Ok(text) => export_string(text, out_json),
            Err(_) => AirpcaStatus::RuntimeError,
        }
    })
}

/// Runs the bound validators configured by the same JSON schema and returns
/// the report (the `bounds_report.json` content).
///
/// # Safety
/// `config_json` must be a valid NUL-terminated string and `out_json` valid;
/// free the result with [`airpca_string_free`].
#[no_mangle]
pub unsafe extern "C" fn airpca_validate_bounds(
    config_json: *const c_char,
    out_json: *mut *mut c_char,
) -> AirpcaStatus {
    guard(|| {
        if out_json.is_null() {
            return AirpcaStatus::NullPointer;
        }
        let text = match read_utf8(config_json) {
            Ok(t) => t,
            Err(status) => return status,
        };
        let cfg = match ExperimentConfig::from_json(text) {
            Ok(c) => c,
            Err(_) => return AirpcaStatus::InvalidConfig,
        };
        let validator = ValidatorConfig {
            seed: cfg.seed,
            theorem1_paths: cfg.validator.theorem1_paths,
            theorem2_seeds: cfg.validator.theorem2_seeds,
        };
        match run_all(&validator).and_then(|records| Ok(serde_json::to_string_pretty(&records)?)) {
            Ok(text) => export_string(text, out_json),
            Err(_) => AirpcaStatus::RuntimeError,
        }
    })
}

/// The exponential integral `∫_x^∞ t⁻¹ e^{−t} dt` for `x > 0`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn airpca_exponential_integral(x: f64, out: *mut f64) -> AirpcaStatus {
    guard(|| {
        if out.is_null() {
            return AirpcaStatus::NullPointer;
        }
        match exponential_integral(x) {
            Ok(v) => {
                *out = v;
                AirpcaStatus::Ok
            }
            Err(_) => AirpcaStatus::InvalidArgument,
        }
    })
}

/// Receive-power cap `P̄ / (M · Ei(G))` for a transmit budget in dBm.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn airpca_max_avg_receive_power(
    p_bar_dbm: f64,
    sub_channels: usize,
    truncation_threshold: f64,
    out: *mut f64,
) -> AirpcaStatus {
    guard(|| {
        if out.is_null() {
            return AirpcaStatus::NullPointer;
        }
        let cfg = ChannelConfig {
            sub_channels,
            truncation_threshold,
            noise_var: 1.0,
            avg_tx_power: airpca::channel::dbm_to_milliwatts(p_bar_dbm),
            outage_prob: 0.0,
        };
        match max_avg_receive_power(&cfg) {
            Ok(v) => {
                *out = v;
                AirpcaStatus::Ok
            }
            Err(_) => AirpcaStatus::InvalidArgument,
        }
    })
}

/// Releases a run handle.
///
/// # Safety
/// `run` must be NULL or a handle from [`airpca_run_execute`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn airpca_run_free(run: *mut AirpcaRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be NULL or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn airpca_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
