//! Parallel, seed-reproducible Monte Carlo estimates of run length,
//! thresholds and detection delay.
//!
//! A stream factory maps a trial seed to an iterator of residuals indexed by
//! stream time `t = 1, 2, …`. `Ok(None)` marks a step that produced no
//! residual; time still advances. Each trial skips `n_skip` steps, calibrates
//! on the next `n_burn` residuals (unless the baseline is fixed) and then
//! monitors up to `horizon` steps with a stop-at-first-alarm detector.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{calibrate, GlrDetector, ResetPolicy};
use crate::error::{MousseError, Result};

/// Baseline used to standardize residuals in each trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Calibration {
    Fixed { mu0: f64, sigma0: f64 },
    BurnIn { n_skip: u64, n_burn: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSetup {
    pub window: usize,
    pub calibration: Calibration,
    /// Monitored steps per trial.
    pub horizon: u64,
}

impl McSetup {
    /// Stream time of the first monitored step.
    pub fn monitor_start(&self) -> u64 {
        match self.calibration {
            Calibration::Fixed { .. } => 1,
            Calibration::BurnIn { n_skip, n_burn } => n_skip + n_burn as u64 + 1,
        }
    }

    fn validate(&self, n_trials: usize) -> Result<()> {
        if n_trials == 0 {
            return Err(MousseError::InvalidConfig("n_trials must be at least 1".into()));
        }
        if self.window == 0 || self.horizon < self.window as u64 {
            return Err(MousseError::InvalidConfig(format!(
                "horizon {} must be at least the window {}",
                self.horizon, self.window
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TrialOutcome {
    /// Stream time of the first statistic at or above the threshold.
    alarm: Option<u64>,
    /// Largest statistic over the monitored steps.
    max_stat: f64,
}

fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed ^ trial as u64
}

fn run_trial<I>(residuals: I, setup: &McSetup, threshold: f64, full_horizon: bool) -> Result<TrialOutcome>
where
    I: Iterator<Item = Result<Option<f64>>>,
{
    let mut stream = residuals.enumerate().map(|(i, r)| (i as u64 + 1, r));
    let (mu0, sigma0) = match setup.calibration {
        Calibration::Fixed { mu0, sigma0 } => (mu0, sigma0),
        Calibration::BurnIn { n_skip, n_burn } => {
            let mut burn = Vec::with_capacity(n_burn);
            while burn.len() < n_burn {
                let Some((t, r)) = stream.next() else {
                    return Err(MousseError::InsufficientData(
                        "stream ended during burn-in".into(),
                    ));
                };
                if let (true, Some(e)) = (t > n_skip, r?) {
                    burn.push(e);
                }
            }
            calibrate(&burn, n_burn)?
        }
    };
    let mut det = GlrDetector::calibrated(mu0, sigma0, setup.window, threshold, ResetPolicy::Stop)?;
    let mut outcome = TrialOutcome {
        alarm: None,
        max_stat: 0.0,
    };
    for _ in 0..setup.horizon {
        let Some((t, r)) = stream.next() else { break };
        let Some(e) = r? else { continue };
        let (stat, alarm) = det.update(e)?;
        outcome.max_stat = outcome.max_stat.max(stat);
        if alarm && outcome.alarm.is_none() {
            outcome.alarm = Some(t);
            if !full_horizon {
                break;
            }
        }
    }
    Ok(outcome)
}

fn run_trials<F, I>(
    factory: &F,
    setup: &McSetup,
    threshold: f64,
    full_horizon: bool,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<TrialOutcome>>
where
    F: Fn(u64) -> Result<I> + Sync,
    I: Iterator<Item = Result<Option<f64>>>,
{
    setup.validate(n_trials)?;
    (0..n_trials)
        .into_par_iter()
        .map(|i| run_trial(factory(trial_seed(seed, i))?, setup, threshold, full_horizon))
        .collect()
}

/// Two-sided 95% Wilson interval for a binomial proportion.
fn wilson(successes: usize, n: usize) -> (f64, f64) {
    let z = 1.959_963_984_540_054;
    let n = n as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// `−m / ln(1 − p)`: mean of an exponential stopping time whose probability
/// of stopping within `m` steps is `p`.
pub fn exponential_arl(p: f64, horizon: u64) -> f64 {
    -(horizon as f64) / (-p).ln_1p()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArlEstimate {
    pub arl: f64,
    pub p_hat: f64,
    pub alarms: usize,
    pub n_trials: usize,
    pub horizon: u64,
    /// No trial alarmed; `arl` is the lower bound `m · n_trials`.
    pub censored: bool,
    /// 95% interval from the Wilson interval on `p̂`; `None` marks an
    /// unbounded end.
    pub ci95: (Option<f64>, Option<f64>),
    /// The interval spans more than a factor of two.
    pub wide_ci: bool,
}

/// Run-length estimate from the fraction of trials alarming within the
/// horizon. Falls back to the mean alarm time when every trial alarms.
pub fn mc_arl<F, I>(
    factory: F,
    threshold: f64,
    setup: &McSetup,
    n_trials: usize,
    seed: u64,
) -> Result<ArlEstimate>
where
    F: Fn(u64) -> Result<I> + Sync,
    I: Iterator<Item = Result<Option<f64>>>,
{
    let outcomes = run_trials(&factory, setup, threshold, false, n_trials, seed)?;
    let start = setup.monitor_start();
    let m = setup.horizon;
    let alarms = outcomes.iter().filter(|o| o.alarm.is_some()).count();
    let p_hat = alarms as f64 / n_trials as f64;
    let (p_lo, p_hi) = wilson(alarms, n_trials);
    let bound = |p: f64| (p > 0.0 && p < 1.0).then(|| exponential_arl(p, m));
    let (arl, censored) = if alarms == 0 {
        ((m * n_trials as u64) as f64, true)
    } else if alarms == n_trials {
        let total: u64 = outcomes.iter().filter_map(|o| o.alarm).map(|t| t - start + 1).sum();
        (total as f64 / n_trials as f64, false)
    } else {
        (exponential_arl(p_hat, m), false)
    };
    let ci95 = (bound(p_hi), bound(p_lo));
    let wide_ci = match ci95 {
        (Some(lo), Some(hi)) => hi > 2.0 * lo,
        _ => true,
    };
    Ok(ArlEstimate {
        arl,
        p_hat,
        alarms,
        n_trials,
        horizon: m,
        censored,
        ci95,
        wide_ci,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    pub threshold: f64,
    pub arl_target: f64,
    /// Fraction of trials whose maximum statistic reaches the threshold.
    pub p_target: f64,
    pub n_trials: usize,
    pub horizon: u64,
}

/// Threshold at which the fraction of trials alarming within the horizon
/// matches `1 − exp(−m / ARL)`.
pub fn mc_threshold<F, I>(
    factory: F,
    arl_target: f64,
    setup: &McSetup,
    n_trials: usize,
    seed: u64,
) -> Result<ThresholdEstimate>
where
    F: Fn(u64) -> Result<I> + Sync,
    I: Iterator<Item = Result<Option<f64>>>,
{
    if !(arl_target > 0.0) {
        return Err(MousseError::InvalidConfig(format!("target ARL {arl_target} must be positive")));
    }
    let outcomes = run_trials(&factory, setup, f64::INFINITY, true, n_trials, seed)?;
    let mut maxima: Vec<f64> = outcomes.iter().map(|o| o.max_stat).collect();
    maxima.sort_by(f64::total_cmp);
    let p_target = -(-(setup.horizon as f64) / arl_target).exp_m1();
    let exceed = ((p_target * n_trials as f64).round() as usize).clamp(1, n_trials);
    let upper = maxima[n_trials - exceed];
    let threshold = if exceed == n_trials {
        upper
    } else {
        0.5 * (maxima[n_trials - exceed - 1] + upper)
    };
    Ok(ThresholdEstimate {
        threshold,
        arl_target,
        p_target,
        n_trials,
        horizon: setup.horizon,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayEstimate {
    /// Mean of `T − κ` over trials alarming after the last pre-change step
    /// `κ`; `None` when no change was injected or nothing was detected.
    pub mean_delay: Option<f64>,
    /// Standard error of the mean delay.
    pub std_error: Option<f64>,
    pub detected: usize,
    pub false_alarms: usize,
    pub misses: usize,
    pub n_trials: usize,
}

/// Detection delay for streams whose first post-change sample arrives at
/// stream time `change_time`.
pub fn mc_delay<F, I>(
    factory: F,
    threshold: f64,
    setup: &McSetup,
    change_time: Option<u64>,
    n_trials: usize,
    seed: u64,
) -> Result<DelayEstimate>
where
    F: Fn(u64) -> Result<I> + Sync,
    I: Iterator<Item = Result<Option<f64>>>,
{
    let outcomes = run_trials(&factory, setup, threshold, false, n_trials, seed)?;
    let Some(change) = change_time else {
        return Ok(DelayEstimate {
            mean_delay: None,
            std_error: None,
            detected: 0,
            false_alarms: outcomes.iter().filter(|o| o.alarm.is_some()).count(),
            misses: 0,
            n_trials,
        });
    };
    if change <= setup.monitor_start() {
        return Err(MousseError::InvalidConfig(format!(
            "change time {change} precedes monitoring start {}",
            setup.monitor_start()
        )));
    }
    let kappa = change - 1;
    let mut delays = Vec::new();
    let mut false_alarms = 0;
    let mut misses = 0;
    for o in &outcomes {
        match o.alarm {
            Some(t) if t > kappa => delays.push((t - kappa) as f64),
            Some(_) => false_alarms += 1,
            None => misses += 1,
        }
    }
    let n = delays.len();
    let mean = (n > 0).then(|| delays.iter().sum::<f64>() / n as f64);
    let std_error = mean.filter(|_| n > 1).map(|mu| {
        let var = delays.iter().map(|d| (d - mu).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    });
    Ok(DelayEstimate {
        mean_delay: mean,
        std_error,
        detected: n,
        false_alarms,
        misses,
        n_trials,
    })
}
