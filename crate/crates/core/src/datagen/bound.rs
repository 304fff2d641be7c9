//! Probabilistic bound on the error of the missing-data coefficients
//! `β_Ω = U_Ω^#(x_Ω − c_Ω)` relative to the complete-data `β = Uᵀ(x − c)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// `coh(U) = (D/d) max_m ‖U Uᵀ e_m‖²` for orthonormal `U`, i.e. the largest
/// squared row norm scaled by `D/d`.
pub fn coherence(basis: &DMatrix<f64>) -> f64 {
    let (dim, d) = basis.shape();
    let max_row = basis
        .row_iter()
        .map(|r| r.norm_squared())
        .fold(0.0, f64::max);
    dim as f64 / d as f64 * max_row
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissingDataBound {
    /// Right-hand side of the bound on `‖β_Ω − β‖²`.
    pub bound: f64,
    /// Off-plane part: `2(1+θ)²/(1−ℓ)² · d/|Ω| · coh · ‖q‖²`.
    pub residual_term: f64,
    /// Noise part: `σ² (64/9) D² / ((1−ℓ)² |Ω|²)`.
    pub noise_term: f64,
    pub q_norm2: f64,
    pub theta: f64,
    pub coherence: f64,
    /// Smallest `|Ω|` for which the bound is claimed.
    pub min_observed: f64,
    pub preconditions_met: bool,
}

/// Evaluates the bound for a point `v`, center `c`, orthonormal basis `U`,
/// observed index set `omega`, noise variance `σ²`, failure probability `ε`
/// and slack `ℓ ∈ (0, 1)`. It holds with probability at least `1 − 3ε`.
pub fn coefficient_error_bound(
    v: &DVector<f64>,
    c: &DVector<f64>,
    basis: &DMatrix<f64>,
    omega: &[usize],
    noise_var: f64,
    eps: f64,
    ell: f64,
) -> MissingDataBound {
    let (dim, d) = basis.shape();
    let diff = v - c;
    let q = &diff - basis * (basis.transpose() * &diff);
    let q_norm2 = q.norm_squared();
    let theta = if q_norm2 > 0.0 {
        let peak = q.iter().map(|x| x * x).fold(0.0, f64::max);
        (2.0 * dim as f64 * peak / q_norm2 * (1.0 / eps).ln()).sqrt()
    } else {
        0.0
    };
    let coh = coherence(basis);
    let m = omega.len() as f64;
    let slack = (1.0 - ell).powi(2);
    let residual_term = 2.0 * (1.0 + theta).powi(2) / slack * d as f64 / m * coh * q_norm2;
    let noise_term = noise_var * (64.0 / 9.0) * (dim as f64).powi(2) / (slack * m * m);
    let min_observed = f64::max(
        8.0 / 3.0 * coh * d as f64 * (2.0 * d as f64 / eps).ln(),
        4.0 / 3.0 * dim as f64 / ((1.0 - ell) * (2.0 * dim as f64 / eps).ln()),
    );
    let preconditions_met = ell > 0.0 && ell < 1.0 && eps > 0.0 && m >= min_observed;
    MissingDataBound {
        bound: residual_term + noise_term,
        residual_term,
        noise_term,
        q_norm2,
        theta,
        coherence: coh,
        min_observed,
        preconditions_met,
    }
}
