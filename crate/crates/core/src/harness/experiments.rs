//! Monte Carlo tables: run length and threshold on change-free streams,
//! detection delay on streams with an abrupt jump, for MOUSSE and the
//! single-subspace baseline.

use serde::{Deserialize, Serialize};

use super::config::{Mode, RunConfig, ScheduleKind};
use crate::changepoint::{mc_arl, mc_delay, mc_threshold, Calibration, McSetup};
use crate::datagen::{sample_stream, ManifoldSpec};
use crate::error::{MousseError, Result};
use crate::tree::{MousseConfig, MousseTree};

/// Offset mixed into the base seed for delay trials so they never reuse a
/// calibration trial's stream.
const DELAY_SEED_OFFSET: u64 = 1 << 40;

/// Residual stream of a tree initialized on the manifold's training batch and
/// run over `horizon` samples. Skipped samples yield `None`.
pub fn residual_stream(
    spec: ManifoldSpec,
    tree_config: MousseConfig,
    n_init: usize,
    horizon: u64,
) -> Result<impl Iterator<Item = Result<Option<f64>>>> {
    let batch: Vec<_> = spec
        .training_batch(n_init)?
        .into_iter()
        .map(|s| s.obs.scatter(spec.dim))
        .collect();
    let mut tree = MousseTree::init_from_batch(&batch, tree_config)?;
    let stream = sample_stream(spec, horizon)?;
    Ok(stream.map(move |s| {
        let out = tree.step(&s.obs)?;
        Ok((!out.skipped).then_some(out.e))
    }))
}

fn tree_config(cfg: &RunConfig, mode: Mode) -> MousseConfig {
    match mode {
        Mode::Mousse => cfg.mousse,
        Mode::SingleSubspace => cfg.mousse.single_subspace(),
    }
}

fn burn_in(cfg: &RunConfig) -> Calibration {
    Calibration::BurnIn {
        n_skip: cfg.detector.n_skip,
        n_burn: cfg.detector.n_burn,
    }
}

/// Setup for run-length trials: burn-in, then `mc_horizon` monitored steps.
pub fn arl_setup(cfg: &RunConfig) -> McSetup {
    McSetup {
        window: cfg.detector.window,
        calibration: burn_in(cfg),
        horizon: cfg.mc_horizon,
    }
}

/// Setup for delay trials: burn-in, then monitoring to the end of the
/// `horizon`-long stream.
pub fn delay_setup(cfg: &RunConfig) -> Result<McSetup> {
    let start = cfg.detector.n_skip + cfg.detector.n_burn as u64;
    if cfg.horizon <= start + cfg.detector.window as u64 {
        return Err(MousseError::InvalidConfig(format!(
            "run.horizon = {} leaves no room after a burn-in ending at {start}",
            cfg.horizon
        )));
    }
    Ok(McSetup {
        window: cfg.detector.window,
        calibration: burn_in(cfg),
        horizon: cfg.horizon - start,
    })
}

/// Manifold spec with the change removed, for calibration trials.
fn change_free(cfg: &RunConfig) -> ManifoldSpec {
    let mut spec = cfg.manifold.spec(cfg.seed);
    if let crate::datagen::Manifold::Bump { schedule } = &mut spec.manifold {
        *schedule = schedule.without_change();
    }
    spec
}

fn stream_length(setup: &McSetup) -> u64 {
    setup.monitor_start() - 1 + setup.horizon
}

/// Residual streams without a change, one per trial seed.
pub fn null_factory(
    cfg: &RunConfig,
    mode: Mode,
    setup: &McSetup,
) -> impl Fn(u64) -> Result<Box<dyn Iterator<Item = Result<Option<f64>>>>> + Sync {
    let spec = change_free(cfg);
    let tc = tree_config(cfg, mode);
    let n_init = cfg.n_init;
    let len = stream_length(setup);
    move |seed| Ok(Box::new(residual_stream(ManifoldSpec { seed, ..spec }, tc, n_init, len)?) as Box<_>)
}

/// Residual streams of the configured manifold, change included.
pub fn change_factory(
    cfg: &RunConfig,
    mode: Mode,
    setup: &McSetup,
) -> impl Fn(u64) -> Result<Box<dyn Iterator<Item = Result<Option<f64>>>>> + Sync {
    let spec = cfg.manifold.spec(cfg.seed);
    let tc = tree_config(cfg, mode);
    let n_init = cfg.n_init;
    let len = stream_length(setup);
    move |seed| Ok(Box::new(residual_stream(ManifoldSpec { seed, ..spec }, tc, n_init, len)?) as Box<_>)
}

/// Run-length table row for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArlRow {
    pub method: String,
    pub missing_frac: f64,
    /// Threshold whose run length was simulated.
    pub b: f64,
    pub arl_target: Option<f64>,
    pub arl_mc: f64,
    pub ci95: (Option<f64>, Option<f64>),
    /// The interval spans more than a factor of two.
    pub wide_ci: bool,
    /// Threshold whose simulated run length matches the target.
    pub b_mc: Option<f64>,
    pub n_trials: usize,
    pub horizon: u64,
    pub variant: String,
}

pub fn arl_row(cfg: &RunConfig, mode: Mode) -> Result<ArlRow> {
    cfg.validate()?;
    let setup = arl_setup(cfg);
    let b = cfg.detector.threshold_value()?;
    let factory = null_factory(cfg, mode, &setup);
    let est = mc_arl(&factory, b, &setup, cfg.trials, cfg.seed)?;
    let b_mc = match cfg.detector.arl_target() {
        Some(target) => Some(mc_threshold(&factory, target, &setup, cfg.trials, cfg.seed)?.threshold),
        None => None,
    };
    Ok(ArlRow {
        method: mode.name().into(),
        missing_frac: cfg.manifold.missing_frac,
        b,
        arl_target: cfg.detector.arl_target(),
        arl_mc: est.arl,
        ci95: est.ci95,
        wide_ci: est.wide_ci,
        b_mc,
        n_trials: cfg.trials,
        horizon: setup.horizon,
        variant: cfg.detector.variant.name().into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodDelay {
    /// Threshold used; simulated for the target run length unless fixed.
    pub b: f64,
    pub mean_delay: Option<f64>,
    pub std_error: Option<f64>,
    pub detected: usize,
    pub false_alarms: usize,
    pub misses: usize,
}

/// Delay table row comparing both methods on the same configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayRow {
    pub arl_target: Option<f64>,
    pub delta_gamma: f64,
    pub missing_frac: f64,
    pub change_time: u64,
    pub n_trials: usize,
    pub horizon: u64,
    pub mousse: MethodDelay,
    pub single_subspace: MethodDelay,
}

pub fn method_delay(cfg: &RunConfig, mode: Mode) -> Result<MethodDelay> {
    cfg.validate()?;
    if cfg.manifold.schedule != ScheduleKind::Jump {
        return Err(MousseError::InvalidConfig(
            "delay experiments need manifold.schedule = jump".into(),
        ));
    }
    let setup = delay_setup(cfg)?;
    let b = match cfg.detector.arl_target() {
        Some(target) => {
            let cal = arl_setup(cfg);
            mc_threshold(null_factory(cfg, mode, &cal), target, &cal, cfg.trials, cfg.seed)?.threshold
        }
        None => cfg.detector.threshold_value()?,
    };
    let est = mc_delay(
        change_factory(cfg, mode, &setup),
        b,
        &setup,
        Some(cfg.manifold.t_change),
        cfg.trials,
        cfg.seed ^ DELAY_SEED_OFFSET,
    )?;
    Ok(MethodDelay {
        b,
        mean_delay: est.mean_delay,
        std_error: est.std_error,
        detected: est.detected,
        false_alarms: est.false_alarms,
        misses: est.misses,
    })
}

pub fn delay_row(cfg: &RunConfig) -> Result<DelayRow> {
    Ok(DelayRow {
        arl_target: cfg.detector.arl_target(),
        delta_gamma: cfg.manifold.delta,
        missing_frac: cfg.manifold.missing_frac,
        change_time: cfg.manifold.t_change,
        n_trials: cfg.trials,
        horizon: cfg.horizon,
        mousse: method_delay(cfg, Mode::Mousse)?,
        single_subspace: method_delay(cfg, Mode::SingleSubspace)?,
    })
}
