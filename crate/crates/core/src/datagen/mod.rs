//! Synthetic streams on known submanifolds: a Gaussian bump whose width
//! follows a schedule, and a chirp with a time-varying sweep rate. Each
//! sample is the manifold point plus white Gaussian noise, observed on a
//! uniformly random subset of coordinates.

mod bound;

use std::f64::consts::PI;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{MousseError, Result};
use crate::subset::Observation;

pub use bound::{coherence, coefficient_error_bound, MissingDataBound};

/// Bump width at `t = 0` for the drifting schedules.
pub const GAMMA_BASE: f64 = 0.6;
pub const CHIRP_SPACING: f64 = 1e-4;

/// Width of the Gaussian bump over time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GammaSchedule {
    Static { gamma: f64 },
    /// Narrows by `gamma0` per step for `s` steps, widens back over the next
    /// `s`, and repeats.
    Slow { gamma0: f64, s: u64 },
    /// Narrowing drift with an extra drop of `delta` from `t_change` on:
    /// `γ_t = γ_{t_change−1} − Δγ − γ0 t` after the change.
    Jump { gamma0: f64, delta: f64, t_change: u64 },
}

impl GammaSchedule {
    pub fn gamma(&self, t: u64) -> f64 {
        match *self {
            GammaSchedule::Static { gamma } => gamma,
            GammaSchedule::Slow { gamma0, s } => {
                let phase = if s == 0 { 0 } else { t % (2 * s) };
                let phase = if phase == 0 && t > 0 { 2 * s } else { phase };
                if phase <= s {
                    GAMMA_BASE - gamma0 * phase as f64
                } else {
                    GAMMA_BASE - gamma0 * (2 * s - phase) as f64
                }
            }
            GammaSchedule::Jump {
                gamma0,
                delta,
                t_change,
            } => {
                if t < t_change {
                    GAMMA_BASE - gamma0 * t as f64
                } else {
                    let before = GAMMA_BASE - gamma0 * t_change.saturating_sub(1) as f64;
                    before - delta - gamma0 * t as f64
                }
            }
        }
    }

    /// Time of the abrupt change, if any.
    pub fn change_time(&self) -> Option<u64> {
        match *self {
            GammaSchedule::Jump { t_change, .. } => Some(t_change),
            _ => None,
        }
    }

    /// Same schedule with the jump removed.
    pub fn without_change(&self) -> GammaSchedule {
        match *self {
            GammaSchedule::Jump { gamma0, .. } => GammaSchedule::Jump {
                gamma0,
                delta: 0.0,
                t_change: u64::MAX,
            },
            other => other,
        }
    }
}

/// Sweep rate `k_t` of the chirp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ChirpRate {
    Constant { k: f64 },
    /// `slope · t` up to `half_period`, then `slope · (2·half_period − t)`,
    /// repeating.
    Triangle { slope: f64, half_period: u64 },
}

impl ChirpRate {
    pub fn k(&self, t: u64) -> f64 {
        match *self {
            ChirpRate::Constant { k } => k,
            ChirpRate::Triangle { slope, half_period } => {
                let period = 2 * half_period.max(1);
                let phase = t % period;
                let phase = if phase == 0 && t > 0 { period } else { phase };
                if phase <= half_period {
                    slope * phase as f64
                } else {
                    slope * (period - phase) as f64
                }
            }
        }
    }
}

impl Default for ChirpRate {
    fn default() -> Self {
        ChirpRate::Triangle {
            slope: 0.1,
            half_period: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Manifold {
    Bump { schedule: GammaSchedule },
    Chirp { rate: ChirpRate },
}

impl Manifold {
    /// Dimension of the parameter `θ`.
    pub fn intrinsic_dim(&self) -> usize {
        match self {
            Manifold::Bump { .. } => 1,
            Manifold::Chirp { .. } => 2,
        }
    }

    /// Schedule parameter (`γ_t` or `k_t`) at time `t`.
    pub fn parameter(&self, t: u64) -> f64 {
        match self {
            Manifold::Bump { schedule } => schedule.gamma(t),
            Manifold::Chirp { rate } => rate.k(t),
        }
    }

    pub fn change_time(&self) -> Option<u64> {
        match self {
            Manifold::Bump { schedule } => schedule.change_time(),
            Manifold::Chirp { .. } => None,
        }
    }

    /// Draws `θ` uniformly over its range.
    pub fn draw_theta<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Manifold::Bump { .. } => vec![rng.random_range(-2.0..=2.0)],
            Manifold::Chirp { .. } => {
                vec![rng.random_range(1.0..=100.0), rng.random_range(0.0..=1.0)]
            }
        }
    }

    pub fn point(&self, theta: &[f64], t: u64, dim: usize) -> Vec<f64> {
        match self {
            Manifold::Bump { schedule } => bump_point(theta[0], schedule.gamma(t), dim),
            Manifold::Chirp { rate } => chirp_point(theta[0], theta[1], rate.k(t), dim),
        }
    }
}

/// `[v]_n = exp(−(z_n − θ)² / (2γ²)) / √(2π)` on `z_n = −2 + 4n/D`,
/// `n = 1..D`.
pub fn bump_point(theta: f64, gamma: f64, dim: usize) -> Vec<f64> {
    let scale = 1.0 / (2.0 * PI).sqrt();
    (1..=dim)
        .map(|n| {
            let z = -2.0 + 4.0 * n as f64 / dim as f64;
            scale * (-(z - theta).powi(2) / (2.0 * gamma * gamma)).exp()
        })
        .collect()
}

/// `[v]_n = sin(2π(f0 z_n + k² z_n² / 2 + φ))` on `z_n = 10⁻⁴ n`.
pub fn chirp_point(f0: f64, phase: f64, k: f64, dim: usize) -> Vec<f64> {
    (1..=dim)
        .map(|n| {
            let z = CHIRP_SPACING * n as f64;
            (2.0 * PI * (f0 * z + 0.5 * k * k * z * z + phase)).sin()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSpec {
    pub manifold: Manifold,
    pub dim: usize,
    pub noise_var: f64,
    /// Fraction of coordinates missing at each step.
    pub missing_frac: f64,
    pub seed: u64,
}

impl ManifoldSpec {
    pub fn observed_count(&self) -> usize {
        ((1.0 - self.missing_frac) * self.dim as f64).round() as usize
    }

    pub fn validate(&self, horizon: u64) -> Result<()> {
        let bad = |msg: String| Err(MousseError::InvalidConfig(msg));
        if self.dim < 2 {
            return bad(format!("dimension {} must be at least 2", self.dim));
        }
        if !(self.noise_var >= 0.0) || !self.noise_var.is_finite() {
            return bad(format!("noise variance {} must be nonnegative", self.noise_var));
        }
        if !(0.0..1.0).contains(&self.missing_frac) {
            return bad(format!("missing fraction {} must lie in [0, 1)", self.missing_frac));
        }
        if self.observed_count() == 0 {
            return bad("no coordinate would be observed".into());
        }
        if let Manifold::Bump { schedule } = self.manifold {
            if let Some(t) = (0..=horizon).find(|&t| !(schedule.gamma(t) > 0.0)) {
                return bad(format!("bump width {} at t = {t} is not positive", schedule.gamma(t)));
            }
        }
        Ok(())
    }

    /// Complete noisy samples drawn at the schedule's `t = 0` value, from an
    /// RNG stream independent of [`sample_stream`].
    pub fn training_batch(&self, n: usize) -> Result<Vec<Sample>> {
        self.validate(0)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        let noise = Normal::new(0.0, self.noise_var.sqrt()).expect("validated variance");
        Ok((0..n)
            .map(|_| {
                let theta = self.manifold.draw_theta(&mut rng);
                let v = self.manifold.point(&theta, 0, self.dim);
                let x: Vec<f64> = v.iter().map(|vi| vi + noise.sample(&mut rng)).collect();
                Sample {
                    obs: Observation::complete(0, &x).expect("finite sample"),
                    truth: Truth {
                        t: 0,
                        theta,
                        parameter: self.manifold.parameter(0),
                        changed: false,
                        v,
                    },
                }
            })
            .collect())
    }
}

/// Hidden ground truth of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub t: u64,
    pub theta: Vec<f64>,
    /// `γ_t` for the bump, `k_t` for the chirp.
    pub parameter: f64,
    /// At or after the injected change.
    pub changed: bool,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub obs: Observation,
    pub truth: Truth,
}

/// Value-semantic generator of samples `t = 1..=horizon`.
#[derive(Debug, Clone)]
pub struct StreamGenerator {
    spec: ManifoldSpec,
    rng: ChaCha8Rng,
    noise: Normal<f64>,
    t: u64,
    horizon: u64,
}

/// Stream of `horizon` samples, deterministic in `spec.seed`.
pub fn sample_stream(spec: ManifoldSpec, horizon: u64) -> Result<StreamGenerator> {
    spec.validate(horizon)?;
    Ok(StreamGenerator {
        spec,
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        noise: Normal::new(0.0, spec.noise_var.sqrt()).expect("validated variance"),
        t: 0,
        horizon,
    })
}

impl Iterator for StreamGenerator {
    type Item = Sample;

    fn next(&mut self) -> Option<Sample> {
        if self.t >= self.horizon {
            return None;
        }
        self.t += 1;
        let t = self.t;
        let spec = &self.spec;
        let theta = spec.manifold.draw_theta(&mut self.rng);
        let v = spec.manifold.point(&theta, t, spec.dim);
        let noisy: Vec<f64> = v.iter().map(|vi| vi + self.noise.sample(&mut self.rng)).collect();
        let m = spec.observed_count();
        let omega: Vec<usize> = if m == spec.dim {
            (0..spec.dim).collect()
        } else {
            let mut idx = index::sample(&mut self.rng, spec.dim, m).into_vec();
            idx.sort_unstable();
            idx
        };
        let values = omega.iter().map(|&i| noisy[i]).collect();
        let obs = Observation::new(t, omega, values).expect("generated observation is valid");
        Some(Sample {
            obs,
            truth: Truth {
                t,
                theta,
                parameter: spec.manifold.parameter(t),
                changed: spec.manifold.change_time().is_some_and(|c| t >= c),
                v,
            },
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.horizon - self.t) as usize;
        (left, Some(left))
    }
}

#[cfg(test)]
mod tests;
