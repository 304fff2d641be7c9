//! Windowed GLR stopping rule over the residual stream, the ARL
//! approximation and Monte Carlo calibration.

pub mod arl;
pub mod montecarlo;
pub mod qq;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{MousseError, Result};

pub use arl::{
    arl_approx, arl_minimizer, nu, select_variant, threshold_for_arl, NuVariant, VariantReport,
    REFERENCE_THRESHOLDS,
};
pub use montecarlo::{
    mc_arl, mc_delay, mc_threshold, ArlEstimate, Calibration, DelayEstimate, McSetup,
    ThresholdEstimate,
};
pub use qq::{normal_qq, qq_correlation};

/// Below this baseline deviation the standardization is meaningless.
pub const MIN_SIGMA: f64 = 1e-12;

/// What happens to the detector state after an alarm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResetPolicy {
    /// Keep the history; the first alarm is the stopping time.
    Stop,
    /// Clear the buffer so later statistics only see residuals after the alarm.
    #[default]
    ResetAndContinue,
}

/// Sample mean and unbiased standard deviation of the first `n_burn`
/// residuals.
pub fn calibrate(residuals: &[f64], n_burn: usize) -> Result<(f64, f64)> {
    if n_burn < 2 {
        return Err(MousseError::InvalidConfig(format!("n_burn = {n_burn} must be at least 2")));
    }
    if residuals.len() < n_burn {
        return Err(MousseError::InsufficientData(format!(
            "{} residuals available for a burn-in of {n_burn}",
            residuals.len()
        )));
    }
    let burn = &residuals[..n_burn];
    let n = n_burn as f64;
    let mean = burn.iter().sum::<f64>() / n;
    let var = burn.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sigma = var.sqrt();
    if !(sigma >= MIN_SIGMA) {
        return Err(MousseError::DegenerateBaseline(sigma));
    }
    Ok((mean, sigma))
}

/// GLR statistic `max_{1 ≤ lag ≤ w} |S̃_t − S̃_{t−lag}| / √lag` over the
/// standardized residuals `(e − μ0)/σ0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlrDetector {
    baseline: Option<(f64, f64)>,
    window: usize,
    threshold: f64,
    policy: ResetPolicy,
    /// Last `w` standardized residuals.
    buffer: VecDeque<f64>,
    /// Cumulative sums aligned with `buffer`, preceded by the anchor value.
    cum: VecDeque<f64>,
    since_anchor: usize,
    samples: u64,
    alarm_count: u64,
    first_alarm: Option<u64>,
    last_stat: f64,
}

impl GlrDetector {
    pub fn new(window: usize, threshold: f64, policy: ResetPolicy) -> Result<Self> {
        if window == 0 {
            return Err(MousseError::InvalidConfig("GLR window must be positive".into()));
        }
        if !(threshold > 0.0) {
            return Err(MousseError::InvalidConfig(format!(
                "GLR threshold {threshold} must be positive"
            )));
        }
        let mut cum = VecDeque::with_capacity(window + 1);
        cum.push_back(0.0);
        Ok(GlrDetector {
            baseline: None,
            window,
            threshold,
            policy,
            buffer: VecDeque::with_capacity(window),
            cum,
            since_anchor: 0,
            samples: 0,
            alarm_count: 0,
            first_alarm: None,
            last_stat: 0.0,
        })
    }

    pub fn calibrated(
        mu0: f64,
        sigma0: f64,
        window: usize,
        threshold: f64,
        policy: ResetPolicy,
    ) -> Result<Self> {
        let mut det = Self::new(window, threshold, policy)?;
        det.set_baseline(mu0, sigma0)?;
        Ok(det)
    }

    pub fn set_baseline(&mut self, mu0: f64, sigma0: f64) -> Result<()> {
        if !(sigma0 >= MIN_SIGMA) || !mu0.is_finite() || !sigma0.is_finite() {
            return Err(MousseError::DegenerateBaseline(sigma0));
        }
        self.baseline = Some((mu0, sigma0));
        Ok(())
    }

    pub fn baseline(&self) -> Option<(f64, f64)> {
        self.baseline
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn set_threshold(&mut self, threshold: f64) {
        self.threshold = threshold;
    }

    pub fn policy(&self) -> ResetPolicy {
        self.policy
    }

    pub fn alarm_count(&self) -> u64 {
        self.alarm_count
    }

    /// Sample count (1-based) at the first alarm.
    pub fn first_alarm(&self) -> Option<u64> {
        self.first_alarm
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn last_statistic(&self) -> f64 {
        self.last_stat
    }

    /// Standardized residuals currently in the window, oldest first.
    pub fn buffer(&self) -> impl Iterator<Item = f64> + '_ {
        self.buffer.iter().copied()
    }

    /// Consecutive differences of the cumulative sums, which reproduce the
    /// buffer contents.
    pub fn cumulative_increments(&self) -> Vec<f64> {
        self.cum
            .iter()
            .zip(self.cum.iter().skip(1))
            .map(|(a, b)| b - a)
            .collect()
    }

    /// Feeds one residual and returns the statistic and whether it alarmed.
    pub fn update(&mut self, e: f64) -> Result<(f64, bool)> {
        let (mu0, sigma0) = self.baseline.ok_or(MousseError::NotCalibrated)?;
        let z = (e - mu0) / sigma0;
        if self.buffer.len() == self.window {
            self.buffer.pop_front();
            self.cum.pop_front();
        }
        self.buffer.push_back(z);
        let last = *self.cum.back().expect("anchor always present");
        self.cum.push_back(last + z);
        self.since_anchor += 1;
        if self.since_anchor >= self.window {
            let anchor = self.cum[0];
            for s in self.cum.iter_mut() {
                *s -= anchor;
            }
            self.since_anchor = 0;
        }
        self.samples += 1;

        let now = *self.cum.back().expect("nonempty");
        let n = self.cum.len() - 1;
        let mut stat = 0.0_f64;
        for lag in 1..=n {
            let diff = (now - self.cum[n - lag]).abs() / (lag as f64).sqrt();
            stat = stat.max(diff);
        }
        self.last_stat = stat;
        let alarm = stat >= self.threshold;
        if alarm {
            self.alarm_count += 1;
            self.first_alarm.get_or_insert(self.samples);
            if self.policy == ResetPolicy::ResetAndContinue {
                self.clear();
            }
        }
        Ok((stat, alarm))
    }

    /// Empties the window, keeping the baseline and alarm history.
    pub fn clear(&mut self) {
        self.buffer.clear();
        self.cum.clear();
        self.cum.push_back(0.0);
        self.since_anchor = 0;
    }
}
