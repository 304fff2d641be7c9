//! Asymptotic average run length of the GLR rule and the inverse threshold
//! solver.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erfc};

use crate::error::{MousseError, Result};

/// Target ARLs and the thresholds the asymptotic formula should reproduce.
pub const REFERENCE_THRESHOLDS: [(f64, f64); 3] = [(1000.0, 3.94), (5000.0, 4.35), (10000.0, 4.52)];
/// Allowed gap between a solved threshold and its reference value.
pub const REFERENCE_TOLERANCE: f64 = 0.1;

pub const QUADRATURE_TOLERANCE: f64 = 1e-10;
pub const BRACKET_MIN: f64 = 0.5;
pub const BRACKET_MAX: f64 = 12.0;

/// Form of the density term in the denominator of `ν`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NuVariant {
    /// `φ(x)/2`.
    #[default]
    AsPrinted,
    /// `φ(x/2)`.
    HalfArg,
}

impl NuVariant {
    pub const ALL: [NuVariant; 2] = [NuVariant::AsPrinted, NuVariant::HalfArg];

    pub fn name(self) -> &'static str {
        match self {
            NuVariant::AsPrinted => "as-printed",
            NuVariant::HalfArg => "half-arg",
        }
    }
}

impl std::str::FromStr for NuVariant {
    type Err = MousseError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as-printed" | "AsPrinted" => Ok(NuVariant::AsPrinted),
            "half-arg" | "HalfArg" => Ok(NuVariant::HalfArg),
            _ => Err(MousseError::InvalidConfig(format!("unknown nu variant '{s}'"))),
        }
    }
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Overshoot correction `ν(x)`, with its continuous extension at zero.
pub fn nu(x: f64, variant: NuVariant) -> f64 {
    if x <= 0.0 {
        return match variant {
            NuVariant::AsPrinted => 2.0,
            NuVariant::HalfArg => 1.0,
        };
    }
    let half = x / 2.0;
    // (2/x)(Φ(x/2) − 1/2) written through erf to avoid cancellation.
    let numerator = erf(half / SQRT_2) / x;
    let density = match variant {
        NuVariant::AsPrinted => normal_pdf(x) / 2.0,
        NuVariant::HalfArg => normal_pdf(half),
    };
    numerator / (half * normal_cdf(half) + density)
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        (a, fa): (f64, f64),
        (m, fm): (f64, f64),
        (b, fb): (f64, f64),
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, (a, fa), (lm, flm), (m, fm), left, tol / 2.0, depth - 1)
            + recurse(f, (m, fm), (rm, frm), (b, fb), right, tol / 2.0, depth - 1)
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(&f, (a, fa), (m, fm), (b, fb), whole, tol, 50)
}

fn arl_with_tolerance(b: f64, variant: NuVariant, tol: f64) -> f64 {
    let integral = adaptive_simpson(|x| x * nu(x, variant).powi(2), 0.0, b, tol);
    (2.0 * PI).sqrt() * (0.5 * b * b).exp() / (b * integral)
}

/// `E∞{T} ≈ √(2π) e^{b²/2} / (b ∫₀ᵇ x ν²(x) dx)`.
pub fn arl_approx(b: f64, variant: NuVariant) -> f64 {
    arl_with_tolerance(b, variant, QUADRATURE_TOLERANCE)
}

/// Same as [`arl_approx`] with an explicit quadrature tolerance.
pub fn arl_approx_tol(b: f64, variant: NuVariant, tol: f64) -> f64 {
    arl_with_tolerance(b, variant, tol)
}

/// Location of the minimum of the approximation on `[0.5, 12]`. Above it
/// the approximation is increasing.
pub fn arl_minimizer(variant: NuVariant) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (BRACKET_MIN, 4.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = arl_approx(x1, variant);
    let mut f2 = arl_approx(x2, variant);
    while hi - lo > 1e-8 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = arl_approx(x1, variant);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = arl_approx(x2, variant);
        }
    }
    0.5 * (lo + hi)
}

/// Threshold whose approximate ARL equals `target_arl`, by bisection on the
/// increasing branch `[b_min, 12]`.
pub fn threshold_for_arl(target_arl: f64, variant: NuVariant) -> Result<f64> {
    let mut lo = arl_minimizer(variant);
    let mut hi = BRACKET_MAX;
    let (min, max) = (arl_approx(lo, variant), arl_approx(hi, variant));
    if !(target_arl > 1.0) || !(target_arl >= min && target_arl <= max) {
        return Err(MousseError::NoBracket {
            target: target_arl,
            min,
            max,
        });
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if arl_approx(mid, variant) < target_arl {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Outcome of checking one variant against [`REFERENCE_THRESHOLDS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub variant: NuVariant,
    /// `(target ARL, solved b, reference b)` rows.
    pub rows: Vec<(f64, f64, f64)>,
    pub passes: bool,
}

/// Solves every reference row under both variants and picks the first one
/// within tolerance, falling back to the default.
pub fn select_variant() -> (NuVariant, Vec<VariantReport>) {
    let reports: Vec<VariantReport> = NuVariant::ALL
        .iter()
        .map(|&variant| {
            let rows: Vec<(f64, f64, f64)> = REFERENCE_THRESHOLDS
                .iter()
                .map(|&(arl, b_ref)| {
                    let b = threshold_for_arl(arl, variant).unwrap_or(f64::NAN);
                    (arl, b, b_ref)
                })
                .collect();
            let passes = rows.iter().all(|(_, b, r)| (b - r).abs() <= REFERENCE_TOLERANCE);
            VariantReport {
                variant,
                rows,
                passes,
            }
        })
        .collect();
    let chosen = reports
        .iter()
        .find(|r| r.passes)
        .map_or(NuVariant::default(), |r| r.variant);
    (chosen, reports)
}
