//! Online descent-region detection and region-adaptive receive-power control.
//!
//! The detector is a small causal state machine over the noisy gradient norm
//! and the (ideally aggregated) objective value: a norm above `ε` means a
//! non-stationary region; a drop below `ε` starts an `N0`-round saddle
//! probation at reduced power, after which a flat objective reclassifies the
//! region as the optimum. The power ledger banks the per-round saving
//! `P̄rx_max − P_rx_min` during saddle sojourns and disburses it in later
//! regions either all at once or along a geometric schedule.

use serde::{Deserialize, Serialize};

use crate::error::{AirPcaError, Result};

/// The three descent-region types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionLabel {
    NonStationary,
    Saddle,
    Optimum,
}

impl RegionLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RegionLabel::NonStationary => "non_stationary",
            RegionLabel::Saddle => "saddle",
            RegionLabel::Optimum => "optimum",
        }
    }
}

/// Detector thresholds. `epsilon` is an absolute gradient-norm threshold;
/// the error-reduction threshold is `f0_rel` times the objective at probation
/// entry; `n0` is the probation length in rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub epsilon: f64,
    pub f0_rel: f64,
    pub n0: u32,
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(AirPcaError::Config("detector epsilon must be positive".into()));
        }
        if !(self.f0_rel > 0.0) {
            return Err(AirPcaError::Config("detector f0 must be positive".into()));
        }
        if self.n0 == 0 {
            return Err(AirPcaError::Config("detector n0 must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    NonStationary,
    /// Counting down a saddle probation; `f_entry` is the objective when the
    /// gradient norm first dipped below `ε`.
    Probation { remaining: u32, f_entry: f64 },
    Optimum,
}

/// Causal region detector: each observation of `(‖ĝ(W_n)‖, F(W_n))` decides
/// the label governing round `n+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorState {
    config: DetectorConfig,
    phase: Phase,
}

impl DetectorState {
    pub fn new(config: DetectorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, phase: Phase::NonStationary })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    /// Feeds one round's noisy gradient norm and objective value; returns the
    /// region label for the next round.
    ///
    /// A norm at or above `ε` always resets to non-stationary, aborting any
    /// probation in progress. When a probation completes, the objective drop
    /// since entry decides between optimum (flat) and another saddle
    /// probation (still descending).
    pub fn observe(&mut self, grad_norm: f64, objective: f64) -> RegionLabel {
        if grad_norm >= self.config.epsilon {
            self.phase = Phase::NonStationary;
            return RegionLabel::NonStationary;
        }
        match self.phase {
            Phase::Optimum => RegionLabel::Optimum,
            Phase::NonStationary => {
                self.phase = Phase::Probation { remaining: self.config.n0, f_entry: objective };
                RegionLabel::Saddle
            }
            Phase::Probation { remaining, f_entry } => {
                if remaining > 1 {
                    self.phase = Phase::Probation { remaining: remaining - 1, f_entry };
                    RegionLabel::Saddle
                } else {
                    let reduction = f_entry - objective;
                    let threshold = self.config.f0_rel * f_entry.abs().max(f64::MIN_POSITIVE);
                    if reduction < threshold {
                        self.phase = Phase::Optimum;
                        RegionLabel::Optimum
                    } else {
                        self.phase = Phase::Probation { remaining: self.config.n0, f_entry: objective };
                        RegionLabel::Saddle
                    }
                }
            }
        }
    }
}

/// How banked power savings are disbursed outside saddle regions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "scheme")]
pub enum SpendingScheme {
    /// Everything in the first round after leaving a saddle region.
    OneShot,
    /// Geometric schedule `a_j = (1−q)·qʲ` against the savings at entry.
    Gradual { q: f64 },
}

/// Receive-power accounting: the saddle floor, the average cap, accumulated
/// savings, and the position in the current spending schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLedger {
    p_rx_min: f64,
    p_rx_max_avg: f64,
    savings: f64,
    scheme: SpendingScheme,
    spend_index: u32,
    savings_at_entry: f64,
    previous_was_saddle: bool,
}

impl PowerLedger {
    pub fn new(p_rx_min: f64, p_rx_max_avg: f64, scheme: SpendingScheme) -> Result<Self> {
        if !(p_rx_min > 0.0 && p_rx_min < p_rx_max_avg) {
            return Err(AirPcaError::Config(format!(
                "saddle receive power must satisfy 0 < {p_rx_min} < {p_rx_max_avg}"
            )));
        }
        if let SpendingScheme::Gradual { q } = scheme {
            if !(q > 0.0 && q < 1.0) {
                return Err(AirPcaError::Config(format!("spending ratio q={q} must lie in (0, 1)")));
            }
        }
        Ok(Self {
            p_rx_min,
            p_rx_max_avg,
            savings: 0.0,
            scheme,
            spend_index: 0,
            savings_at_entry: 0.0,
            previous_was_saddle: true, // a run starts a fresh spending epoch
        })
    }

    pub fn savings(&self) -> f64 {
        self.savings
    }

    pub fn p_rx_min(&self) -> f64 {
        self.p_rx_min
    }

    pub fn p_rx_max_avg(&self) -> f64 {
        self.p_rx_max_avg
    }

    /// Decides this round's receive power from the detected region and
    /// updates the ledger. Saddle rounds run at the floor and bank the
    /// difference; other rounds run at the cap plus the scheduled spend.
    /// Savings never go negative.
    pub fn power_for_round(&mut self, region: RegionLabel) -> f64 {
        match region {
            RegionLabel::Saddle => {
                self.savings += self.p_rx_max_avg - self.p_rx_min;
                self.spend_index = 0;
                self.previous_was_saddle = true;
                self.p_rx_min
            }
            RegionLabel::NonStationary | RegionLabel::Optimum => {
                if self.previous_was_saddle {
                    // New spending epoch: snapshot the pot.
                    self.savings_at_entry = self.savings;
                    self.spend_index = 0;
                    self.previous_was_saddle = false;
                }
                let spend = match self.scheme {
                    SpendingScheme::OneShot => {
                        if self.spend_index == 0 {
                            self.savings
                        } else {
                            0.0
                        }
                    }
                    SpendingScheme::Gradual { q } => {
                        let coeff = (1.0 - q) * q.powi(self.spend_index as i32);
                        (coeff * self.savings_at_entry).min(self.savings)
                    }
                };
                self.savings -= spend;
                if self.savings < 0.0 {
                    self.savings = 0.0;
                }
                self.spend_index = self.spend_index.saturating_add(1);
                self.p_rx_max_avg + spend
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn detector(epsilon: f64, f0_rel: f64, n0: u32) -> DetectorState {
        DetectorState::new(DetectorConfig { epsilon, f0_rel, n0 }).unwrap()
    }

    #[test]
    fn large_gradient_is_always_non_stationary() {
        let mut det = detector(1.0, 0.01, 5);
        for _ in 0..100 {
            assert_eq!(det.observe(2.0, 10.0), RegionLabel::NonStationary);
        }
    }

    #[test]
    fn escaping_saddle_keeps_saddle_label() {
        let mut det = detector(1.0, 0.01, 4);
        // Entry at objective 10 (f0 = 0.1), then N0 = 4 probation rounds.
        assert_eq!(det.observe(0.5, 10.0), RegionLabel::Saddle);
        assert_eq!(det.observe(0.5, 9.9), RegionLabel::Saddle);
        assert_eq!(det.observe(0.5, 9.5), RegionLabel::Saddle);
        assert_eq!(det.observe(0.5, 9.2), RegionLabel::Saddle);
        // Probation evaluates here: drop of 1.0 = 10·f0, so still a saddle
        // and a fresh probation starts from 9.0.
        assert_eq!(det.observe(0.5, 9.0), RegionLabel::Saddle);
        assert_eq!(det.observe(0.5, 9.0), RegionLabel::Saddle);
        assert_eq!(det.observe(0.5, 9.0), RegionLabel::Saddle);
        assert_eq!(det.observe(0.5, 9.0), RegionLabel::Saddle);
        // Flat stretch over the whole probation flips to optimum.
        assert_eq!(det.observe(0.5, 9.0), RegionLabel::Optimum);
    }

    #[test]
    fn flat_probation_relabels_optimum_and_latches() {
        let mut det = detector(1.0, 0.01, 3);
        assert_eq!(det.observe(0.2, 5.0), RegionLabel::Saddle);
        assert_eq!(det.observe(0.2, 5.0), RegionLabel::Saddle);
        assert_eq!(det.observe(0.2, 5.0), RegionLabel::Saddle);
        assert_eq!(det.observe(0.2, 5.0), RegionLabel::Optimum);
        // Latched until the gradient rises above epsilon again.
        for _ in 0..10 {
            assert_eq!(det.observe(0.9, 5.0), RegionLabel::Optimum);
        }
        assert_eq!(det.observe(1.5, 5.0), RegionLabel::NonStationary);
    }

    #[test]
    fn probation_aborts_when_gradient_rises() {
        let mut det = detector(1.0, 0.01, 10);
        assert_eq!(det.observe(0.5, 7.0), RegionLabel::Saddle);
        assert_eq!(det.observe(3.0, 7.0), RegionLabel::NonStationary);
        // Re-entry starts a fresh probation.
        assert_eq!(det.observe(0.5, 7.0), RegionLabel::Saddle);
    }

    #[test]
    fn one_shot_spends_everything_once() {
        let mut ledger = PowerLedger::new(0.1, 1.0, SpendingScheme::OneShot).unwrap();
        for _ in 0..100 {
            assert_eq!(ledger.power_for_round(RegionLabel::Saddle), 0.1);
        }
        let banked = 100.0 * 0.9;
        assert!((ledger.savings() - banked).abs() < 1e-9);
        let first = ledger.power_for_round(RegionLabel::NonStationary);
        assert!((first - (1.0 + banked)).abs() < 1e-9);
        assert_eq!(ledger.savings(), 0.0);
        assert_eq!(ledger.power_for_round(RegionLabel::NonStationary), 1.0);
        assert_eq!(ledger.power_for_round(RegionLabel::Optimum), 1.0);
    }

    #[test]
    fn gradual_spending_follows_geometric_schedule() {
        let q = 0.8;
        let mut ledger = PowerLedger::new(0.1, 1.0, SpendingScheme::Gradual { q }).unwrap();
        for _ in 0..50 {
            ledger.power_for_round(RegionLabel::Saddle);
        }
        let pot = ledger.savings();
        let mut spent = 0.0;
        for j in 0..200 {
            let p = ledger.power_for_round(RegionLabel::Optimum);
            let expect = (1.0 - q) * q.powi(j) * pot;
            let spend = p - 1.0;
            if j < 40 {
                assert!((spend - expect).abs() < 1e-9 * pot, "round {j}: {spend} vs {expect}");
            }
            spent += spend;
            assert!(spent <= pot * (1.0 + 1e-12));
        }
        assert!(ledger.savings() >= 0.0);
    }

    #[test]
    fn tiny_q_degenerates_to_one_shot() {
        let mut one_shot = PowerLedger::new(0.2, 1.0, SpendingScheme::OneShot).unwrap();
        let mut gradual = PowerLedger::new(0.2, 1.0, SpendingScheme::Gradual { q: 1e-12 }).unwrap();
        let labels = [
            RegionLabel::Saddle,
            RegionLabel::Saddle,
            RegionLabel::Saddle,
            RegionLabel::NonStationary,
            RegionLabel::NonStationary,
            RegionLabel::Optimum,
            RegionLabel::Saddle,
            RegionLabel::NonStationary,
        ];
        for label in labels {
            let a = one_shot.power_for_round(label);
            let b = gradual.power_for_round(label);
            assert!((a - b).abs() <= 1e-9 * a.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn interleaved_regions_reset_epochs() {
        let q = 0.5;
        let mut ledger = PowerLedger::new(0.5, 1.0, SpendingScheme::Gradual { q }).unwrap();
        ledger.power_for_round(RegionLabel::Saddle); // banks 0.5
        let p0 = ledger.power_for_round(RegionLabel::NonStationary); // spends 0.25
        let p1 = ledger.power_for_round(RegionLabel::Optimum); // spends 0.125 (same epoch)
        assert!((p0 - 1.25).abs() < 1e-12);
        assert!((p1 - 1.125).abs() < 1e-12);
        ledger.power_for_round(RegionLabel::Saddle); // banks another 0.5
        // New epoch snapshots the whole remaining pot.
        let pot = ledger.savings();
        let p2 = ledger.power_for_round(RegionLabel::NonStationary);
        assert!((p2 - (1.0 + 0.5 * pot)).abs() < 1e-12);
    }

    #[test]
    fn budget_is_conserved_over_random_label_sequences() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let p_max = 1.0;
        for seed in 0..40u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let scheme = if seed % 2 == 0 {
                SpendingScheme::OneShot
            } else {
                SpendingScheme::Gradual { q: 0.1 + 0.8 * rng.gen::<f64>() }
            };
            let mut ledger = PowerLedger::new(0.05 + 0.5 * rng.gen::<f64>(), p_max, scheme).unwrap();
            let mut total = 0.0;
            let rounds = 500;
            for n in 0..rounds {
                let label = match rng.gen_range(0..3) {
                    0 => RegionLabel::Saddle,
                    1 => RegionLabel::NonStationary,
                    _ => RegionLabel::Optimum,
                };
                total += ledger.power_for_round(label);
                assert!(ledger.savings() >= 0.0, "seed {seed}: negative savings at round {n}");
            }
            assert!(
                total <= rounds as f64 * p_max * (1.0 + 1e-12),
                "seed {seed}: spent {total} over cap {}",
                rounds as f64 * p_max
            );
        }
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(PowerLedger::new(0.0, 1.0, SpendingScheme::OneShot).is_err());
        assert!(PowerLedger::new(1.0, 1.0, SpendingScheme::OneShot).is_err());
        assert!(PowerLedger::new(0.1, 1.0, SpendingScheme::Gradual { q: 0.0 }).is_err());
        assert!(PowerLedger::new(0.1, 1.0, SpendingScheme::Gradual { q: 1.0 }).is_err());
        assert!(DetectorState::new(DetectorConfig { epsilon: 0.0, f0_rel: 0.1, n0: 1 }).is_err());
        assert!(DetectorState::new(DetectorConfig { epsilon: 1.0, f0_rel: 0.1, n0: 0 }).is_err());
    }
}
