//! The exponential integral `∫_x^∞ t⁻¹ e^{−t} dt` for `x > 0`.
//!
//! The receive-power budget of truncated channel inversion divides the
//! average transmit power by this integral evaluated at the truncation
//! threshold, so it must be accurate over several orders of magnitude of the
//! argument. Power series below the switch point, continued fraction above.

use crate::error::{AirPcaError, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SWITCH_POINT: f64 = 1.0;

/// Evaluates `∫_x^∞ t⁻¹ e^{−t} dt` to relative accuracy better than 1e-12.
///
/// Returns a domain error for `x ≤ 0` (the integral diverges at 0).
pub fn exponential_integral(x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return Err(AirPcaError::InvalidArgument(format!(
            "exponential integral requires x > 0, got {x}"
        )));
    }
    if x <= SWITCH_POINT {
        Ok(series_small(x))
    } else {
        Ok(continued_fraction_large(x))
    }
}

// E1(x) = −γ − ln x + Σ_{k≥1} (−1)^{k+1} x^k / (k·k!), convergent for small x.
fn series_small(x: f64) -> f64 {
    let mut sum = 0.0;
    let mut term = 1.0; // x^k / k! carried incrementally
    for k in 1..200 {
        term *= x / k as f64;
        let contribution = if k % 2 == 1 { term } else { -term } / k as f64;
        sum += contribution;
        if contribution.abs() < 1e-17 * sum.abs().max(1.0) {
            break;
        }
    }
    -EULER_GAMMA - x.ln() + sum
}

// E1(x) = e^{−x} / (x + 1 − 1²/(x + 3 − 2²/(x + 5 − …))), evaluated with the
// modified Lentz algorithm.
fn continued_fraction_large(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..200u32 {
        let a = -((i as f64) * (i as f64));
        b += 2.0;
        d = a * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-15 {
            break;
        }
    }
    (-x).exp() * h
}
