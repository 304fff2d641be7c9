//! Run configuration as flat `key = value` lines with dotted keys, e.g.
//!
//! ```text
//! # slow drift, 40% missing
//! manifold.missing_frac = 0.4
//! mousse.alpha = 0.9
//! detector.arl = 1000
//! ```

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::changepoint::{threshold_for_arl, NuVariant, ResetPolicy};
use crate::datagen::{ChirpRate, GammaSchedule, Manifold, ManifoldSpec, GAMMA_BASE};
use crate::error::{MousseError, Result};
use crate::tracking::TrackerKind;
use crate::tree::{DistanceTiming, InitStop, MousseConfig, ResidualAverage, UpdatePolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Mousse,
    /// One PETRELS-FO subspace that never splits.
    SingleSubspace,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Mousse => "mousse",
            Mode::SingleSubspace => "single-subspace",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManifoldKind {
    #[default]
    Bump,
    Chirp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    Static,
    #[default]
    Slow,
    Jump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateKind {
    Constant,
    #[default]
    Triangle,
}

/// Flat manifold parameters; only the ones relevant to the chosen kind and
/// schedule are used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldParams {
    pub kind: ManifoldKind,
    pub dim: usize,
    pub noise_var: f64,
    pub missing_frac: f64,
    pub schedule: ScheduleKind,
    pub gamma: f64,
    pub gamma0: f64,
    pub s: u64,
    pub delta: f64,
    pub t_change: u64,
    pub rate: RateKind,
    pub chirp_k: f64,
    pub chirp_slope: f64,
    pub chirp_half_period: u64,
}

impl Default for ManifoldParams {
    fn default() -> Self {
        ManifoldParams {
            kind: ManifoldKind::Bump,
            dim: 100,
            noise_var: 4e-4,
            missing_frac: 0.0,
            schedule: ScheduleKind::Slow,
            gamma: GAMMA_BASE,
            gamma0: 2e-4,
            s: 1000,
            delta: 0.05,
            t_change: 200,
            rate: RateKind::Triangle,
            chirp_k: 0.0,
            chirp_slope: 0.1,
            chirp_half_period: 1000,
        }
    }
}

impl ManifoldParams {
    pub fn manifold(&self) -> Manifold {
        match self.kind {
            ManifoldKind::Bump => Manifold::Bump {
                schedule: match self.schedule {
                    ScheduleKind::Static => GammaSchedule::Static { gamma: self.gamma },
                    ScheduleKind::Slow => GammaSchedule::Slow {
                        gamma0: self.gamma0,
                        s: self.s,
                    },
                    ScheduleKind::Jump => GammaSchedule::Jump {
                        gamma0: self.gamma0,
                        delta: self.delta,
                        t_change: self.t_change,
                    },
                },
            },
            ManifoldKind::Chirp => Manifold::Chirp {
                rate: match self.rate {
                    RateKind::Constant => ChirpRate::Constant { k: self.chirp_k },
                    RateKind::Triangle => ChirpRate::Triangle {
                        slope: self.chirp_slope,
                        half_period: self.chirp_half_period,
                    },
                },
            },
        }
    }

    pub fn spec(&self, seed: u64) -> ManifoldSpec {
        ManifoldSpec {
            manifold: self.manifold(),
            dim: self.dim,
            noise_var: self.noise_var,
            missing_frac: self.missing_frac,
            seed,
        }
    }
}

/// Target run length or a fixed threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdChoice {
    Arl(f64),
    Explicit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub window: usize,
    pub threshold: ThresholdChoice,
    /// Residuals ignored while the tracker settles.
    pub n_skip: u64,
    /// Residuals after the skip used to estimate `(μ0, σ0)`.
    pub n_burn: usize,
    pub variant: NuVariant,
    pub reset: ResetPolicy,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            window: 40,
            threshold: ThresholdChoice::Arl(1000.0),
            n_skip: 50,
            n_burn: 100,
            variant: NuVariant::default(),
            reset: ResetPolicy::default(),
        }
    }
}

impl DetectorConfig {
    /// Explicit threshold, or the analytic one for the target run length.
    pub fn threshold_value(&self) -> Result<f64> {
        match self.threshold {
            ThresholdChoice::Explicit(b) => Ok(b),
            ThresholdChoice::Arl(arl) => threshold_for_arl(arl, self.variant),
        }
    }

    pub fn arl_target(&self) -> Option<f64> {
        match self.threshold {
            ThresholdChoice::Arl(arl) => Some(arl),
            ThresholdChoice::Explicit(_) => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputPaths {
    pub records: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub manifold: ManifoldParams,
    pub mousse: MousseConfig,
    /// GROUSE step size, used when `mousse.tracker = grouse`.
    pub grouse_eta0: f64,
    pub detector: DetectorConfig,
    pub mode: Mode,
    /// Stream length for `simulate`, `track` and the change-point trials.
    pub horizon: u64,
    pub seed: u64,
    /// Complete rows used to initialize the tree.
    pub n_init: usize,
    /// Factor applied to every input value before tracking.
    pub input_scale: f64,
    pub trials: usize,
    /// Monitored steps per run-length trial.
    pub mc_horizon: u64,
    pub output: OutputPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            manifold: ManifoldParams::default(),
            mousse: MousseConfig::default(),
            grouse_eta0: 0.1,
            detector: DetectorConfig::default(),
            mode: Mode::Mousse,
            horizon: 2000,
            seed: 1,
            n_init: 200,
            input_scale: 1.0,
            trials: 300,
            mc_horizon: 1000,
            output: OutputPaths::default(),
        }
    }
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| MousseError::InvalidConfig(format!("cannot parse '{raw}' for {key}")))
}

fn choice<T: Copy>(key: &str, raw: &str, options: &[(&str, T)]) -> Result<T> {
    options
        .iter()
        .find(|(name, _)| *name == raw)
        .map(|&(_, v)| v)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            MousseError::InvalidConfig(format!("{key} must be one of {}, got '{raw}'", names.join(", ")))
        })
}

impl RunConfig {
    /// Parses `key = value` lines on top of the defaults. Blank lines and
    /// `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.apply_pair(line).map_err(|err| MousseError::Parse {
                line: i + 1,
                message: match err {
                    MousseError::InvalidConfig(msg) => msg,
                    other => other.to_string(),
                },
            })?;
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_pair(&mut self, pair: &str) -> Result<()> {
        let (key, raw) = pair
            .split_once('=')
            .ok_or_else(|| MousseError::InvalidConfig(format!("expected key=value, got '{pair}'")))?;
        self.set(key.trim(), raw.trim())
    }

    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let m = &mut self.manifold;
        let det = &mut self.detector;
        match key {
            "manifold.kind" => {
                m.kind = choice(key, raw, &[("bump", ManifoldKind::Bump), ("chirp", ManifoldKind::Chirp)])?
            }
            "manifold.dim" => m.dim = value(key, raw)?,
            "manifold.noise_var" => m.noise_var = value(key, raw)?,
            "manifold.missing_frac" => m.missing_frac = value(key, raw)?,
            "manifold.schedule" => {
                m.schedule = choice(
                    key,
                    raw,
                    &[
                        ("static", ScheduleKind::Static),
                        ("slow", ScheduleKind::Slow),
                        ("jump", ScheduleKind::Jump),
                    ],
                )?
            }
            "manifold.gamma" => m.gamma = value(key, raw)?,
            "manifold.gamma0" => m.gamma0 = value(key, raw)?,
            "manifold.s" => m.s = value(key, raw)?,
            "manifold.delta" => m.delta = value(key, raw)?,
            "manifold.t_change" => m.t_change = value(key, raw)?,
            "manifold.rate" => {
                m.rate = choice(key, raw, &[("constant", RateKind::Constant), ("triangle", RateKind::Triangle)])?
            }
            "manifold.chirp_k" => m.chirp_k = value(key, raw)?,
            "manifold.chirp_slope" => m.chirp_slope = value(key, raw)?,
            "manifold.chirp_half_period" => m.chirp_half_period = value(key, raw)?,
            "mousse.d" => self.mousse.d = value(key, raw)?,
            "mousse.eps" => self.mousse.eps = value(key, raw)?,
            "mousse.alpha" => self.mousse.alpha = value(key, raw)?,
            "mousse.mu" => self.mousse.mu = value(key, raw)?,
            "mousse.max_depth" => self.mousse.max_depth = value(key, raw)?,
            "mousse.tracker" => {
                self.mousse.tracker = choice(
                    key,
                    raw,
                    &[
                        ("grouse", TrackerKind::Grouse { eta0: self.grouse_eta0 }),
                        ("petrels-gs", TrackerKind::PetrelsGs),
                        ("petrels-fo", TrackerKind::PetrelsFo),
                    ],
                )?
            }
            "mousse.eta0" => {
                self.grouse_eta0 = value(key, raw)?;
                if let TrackerKind::Grouse { eta0 } = &mut self.mousse.tracker {
                    *eta0 = self.grouse_eta0;
                }
            }
            "mousse.update_policy" => {
                self.mousse.update_policy =
                    choice(key, raw, &[("nearest", UpdatePolicy::Nearest), ("all", UpdatePolicy::All)])?
            }
            "mousse.residual_average" => {
                self.mousse.residual_average = choice(
                    key,
                    raw,
                    &[("weighted", ResidualAverage::Weighted), ("sum", ResidualAverage::Sum)],
                )?
            }
            "mousse.distance_timing" => {
                self.mousse.distance_timing = choice(
                    key,
                    raw,
                    &[
                        ("after-update", DistanceTiming::AfterUpdate),
                        ("before-update", DistanceTiming::BeforeUpdate),
                    ],
                )?
            }
            "mousse.init_stop" => {
                self.mousse.init_stop = choice(
                    key,
                    raw,
                    &[
                        ("minor-eigenvalue", InitStop::MinorEigenvalue),
                        ("residual-energy", InitStop::ResidualEnergy),
                    ],
                )?
            }
            "detector.window" => det.window = value(key, raw)?,
            "detector.arl" => det.threshold = ThresholdChoice::Arl(value(key, raw)?),
            "detector.b" => det.threshold = ThresholdChoice::Explicit(value(key, raw)?),
            "detector.n_skip" => det.n_skip = value(key, raw)?,
            "detector.n_burn" => det.n_burn = value(key, raw)?,
            "detector.variant" => det.variant = raw.parse()?,
            "detector.reset" => {
                det.reset = choice(
                    key,
                    raw,
                    &[("stop", ResetPolicy::Stop), ("reset-and-continue", ResetPolicy::ResetAndContinue)],
                )?
            }
            "run.mode" => {
                self.mode = choice(
                    key,
                    raw,
                    &[("mousse", Mode::Mousse), ("single-subspace", Mode::SingleSubspace)],
                )?
            }
            "run.horizon" => self.horizon = value(key, raw)?,
            "run.seed" => self.seed = value(key, raw)?,
            "run.n_init" => self.n_init = value(key, raw)?,
            "run.trials" => self.trials = value(key, raw)?,
            "mc.horizon" => self.mc_horizon = value(key, raw)?,
            "input.scale" => self.input_scale = value(key, raw)?,
            "output.records" => self.output.records = Some(raw.into()),
            "output.summary" => self.output.summary = Some(raw.into()),
            "output.truth" => self.output.truth = Some(raw.into()),
            _ => return Err(MousseError::InvalidConfig(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Tree configuration after applying the mode.
    pub fn tree_config(&self) -> MousseConfig {
        match self.mode {
            Mode::Mousse => self.mousse,
            Mode::SingleSubspace => self.mousse.single_subspace(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(MousseError::InvalidConfig(msg));
        self.manifold.spec(self.seed).validate(self.horizon)?;
        self.tree_config().validate(self.manifold.dim)?;
        if self.n_init < 2 {
            return bad(format!("run.n_init = {} must be at least 2", self.n_init));
        }
        if !(self.input_scale > 0.0 && self.input_scale.is_finite()) {
            return bad(format!("input.scale = {} must be positive", self.input_scale));
        }
        if self.detector.window == 0 {
            return bad("detector.window must be at least 1".into());
        }
        if self.detector.n_burn < 2 {
            return bad(format!("detector.n_burn = {} must be at least 2", self.detector.n_burn));
        }
        match self.detector.threshold {
            ThresholdChoice::Arl(a) if !(a > 1.0) => bad(format!("detector.arl = {a} must exceed 1")),
            ThresholdChoice::Explicit(b) if !(b > 0.0) => bad(format!("detector.b = {b} must be positive")),
            _ => Ok(()),
        }
    }
}
