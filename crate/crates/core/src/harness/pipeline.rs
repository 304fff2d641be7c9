//! Streaming track-and-detect loop: tree step, burn-in calibration of the
//! residual baseline, then the GLR detector.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::io::StreamRecord;
use crate::changepoint::{calibrate, GlrDetector};
use crate::error::{MousseError, Result};
use crate::subset::Observation;
use crate::tree::MousseTree;

#[derive(Debug, Clone)]
pub struct Pipeline {
    tree: MousseTree,
    detector: GlrDetector,
    n_skip: u64,
    n_burn: usize,
    burn: Vec<f64>,
    scale: f64,
    stats: Stats,
}

#[derive(Debug, Clone, Default)]
struct Stats {
    steps: u64,
    skipped: u64,
    monitored: u64,
    e_sum: f64,
    eps_sum: f64,
    max_k: usize,
    alarms: Vec<u64>,
}

/// End-of-run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: String,
    pub steps: u64,
    pub skipped: u64,
    /// Steps after the burn-in with a residual.
    pub monitored: u64,
    /// Mean `e_t` over monitored steps.
    pub mean_e: Option<f64>,
    pub mean_eps: Option<f64>,
    pub final_k: usize,
    pub max_k: usize,
    pub mu0: Option<f64>,
    pub sigma0: Option<f64>,
    pub threshold: f64,
    pub variant: String,
    pub alarm_times: Vec<u64>,
}

impl Pipeline {
    /// Initializes the tree from complete samples (already scaled) and a
    /// detector awaiting its baseline.
    pub fn new(cfg: &RunConfig, init: &[DVector<f64>]) -> Result<Self> {
        cfg.validate()?;
        let scale = cfg.input_scale;
        let scaled: Vec<DVector<f64>> = init.iter().map(|x| x * scale).collect();
        let tree = MousseTree::init_from_batch(&scaled, cfg.tree_config())?;
        let det = &cfg.detector;
        let detector = GlrDetector::new(det.window, det.threshold_value()?, det.reset)?;
        Ok(Pipeline {
            stats: Stats {
                max_k: tree.k(),
                ..Stats::default()
            },
            tree,
            detector,
            n_skip: det.n_skip,
            n_burn: det.n_burn,
            burn: Vec::with_capacity(det.n_burn),
            scale,
        })
    }

    pub fn tree(&self) -> &MousseTree {
        &self.tree
    }

    pub fn detector(&self) -> &GlrDetector {
        &self.detector
    }

    pub fn step(&mut self, obs: &Observation) -> Result<StreamRecord> {
        let obs = if self.scale == 1.0 { obs.clone() } else { obs.scaled(self.scale) };
        let out = self.tree.step(&obs)?;
        let s = &mut self.stats;
        s.steps += 1;
        s.max_k = s.max_k.max(out.k);
        let mut rec = StreamRecord {
            t: out.t,
            e: out.e,
            eps: out.eps,
            k: out.k,
            glr: 0.0,
            alarm: false,
            skipped: out.skipped,
        };
        if out.skipped {
            s.skipped += 1;
            return Ok(rec);
        }
        if self.detector.baseline().is_some() {
            let (stat, alarm) = self.detector.update(out.e)?;
            rec.glr = stat;
            rec.alarm = alarm;
            s.monitored += 1;
            s.e_sum += out.e;
            s.eps_sum += out.eps;
            if alarm {
                s.alarms.push(out.t);
            }
        } else if out.t > self.n_skip {
            self.burn.push(out.e);
            if self.burn.len() == self.n_burn {
                let (mu0, sigma0) = calibrate(&self.burn, self.n_burn)?;
                self.detector.set_baseline(mu0, sigma0)?;
            }
        }
        Ok(rec)
    }

    pub fn summary(&self, cfg: &RunConfig) -> RunSummary {
        let s = &self.stats;
        let mean = |sum: f64| (s.monitored > 0).then(|| sum / s.monitored as f64);
        let baseline = self.detector.baseline();
        RunSummary {
            mode: cfg.mode.name().into(),
            steps: s.steps,
            skipped: s.skipped,
            monitored: s.monitored,
            mean_e: mean(s.e_sum),
            mean_eps: mean(s.eps_sum),
            final_k: self.tree.k(),
            max_k: s.max_k,
            mu0: baseline.map(|b| b.0),
            sigma0: baseline.map(|b| b.1),
            threshold: self.detector.threshold(),
            variant: cfg.detector.variant.name().into(),
            alarm_times: s.alarms.clone(),
        }
    }
}

/// Runs a stream: the first `n_init` items must be complete rows for
/// initialization, the rest are tracked with `t = 1, 2, …`. Each record is
/// passed to `sink`.
pub fn run_stream<I, F>(cfg: &RunConfig, rows: I, mut sink: F) -> Result<RunSummary>
where
    I: IntoIterator<Item = Result<Observation>>,
    F: FnMut(&StreamRecord) -> Result<()>,
{
    let mut rows = rows.into_iter();
    let dim = cfg.manifold.dim;
    let mut init = Vec::with_capacity(cfg.n_init);
    while init.len() < cfg.n_init {
        let obs = rows.next().ok_or_else(|| {
            MousseError::InsufficientData(format!(
                "stream ended after {} of {} initialization rows",
                init.len(),
                cfg.n_init
            ))
        })??;
        if !obs.is_complete(dim) {
            return Err(MousseError::InvalidObservation(format!(
                "initialization row {} has missing entries",
                init.len() + 1
            )));
        }
        init.push(obs.scatter(dim));
    }
    let mut pipeline = Pipeline::new(cfg, &init)?;
    for (i, obs) in rows.enumerate() {
        let mut obs = obs?;
        obs.t = i as u64 + 1;
        let rec = pipeline.step(&obs)?;
        sink(&rec)?;
    }
    Ok(pipeline.summary(cfg))
}
