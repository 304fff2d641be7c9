//! Basis updates for a single subset: GROUSE (rank-one geodesic step on the
//! Grassmannian) and PETRELS (per-row recursive least squares) followed by
//! Gram-Schmidt or polar orthonormalization.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MousseError, Result};
use crate::subset::{Observation, ProjectionResult};

/// Initial gain for every per-row inverse correlation matrix.
pub const PETRELS_INITIAL_GAIN: f64 = 1e3;

const COLUMN_COLLAPSE: f64 = 1e-12;

/// Which basis-update rule a subset uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrackerKind {
    Grouse { eta0: f64 },
    PetrelsGs,
    PetrelsFo,
}

impl Default for TrackerKind {
    fn default() -> Self {
        TrackerKind::PetrelsFo
    }
}

impl TrackerKind {
    pub fn uses_petrels(&self) -> bool {
        matches!(self, TrackerKind::PetrelsGs | TrackerKind::PetrelsFo)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TrackerKind::Grouse { eta0 } if !(eta0 > 0.0 && eta0.is_finite()) => Err(
                MousseError::InvalidConfig(format!("GROUSE step size eta0 = {eta0} must be > 0")),
            ),
            _ => Ok(()),
        }
    }
}

/// Second-order state of PETRELS: one `d×d` inverse correlation matrix
/// `R_m⁻¹` per ambient row.
#[derive(Debug, Clone, PartialEq)]
pub struct PetrelsState {
    pub r_inv: Vec<DMatrix<f64>>,
}

impl PetrelsState {
    pub fn new(dim: usize, d: usize) -> Self {
        PetrelsState {
            r_inv: vec![DMatrix::identity(d, d) * PETRELS_INITIAL_GAIN; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.r_inv.len()
    }
}

/// One GROUSE step on the cost `min_a ‖P_Ω(x − U a − c)‖²`.
///
/// Leaves `basis` untouched when the sample lies on the subspace, when
/// `β = 0`, or when `eta0 = 0`.
pub fn grouse_step(basis: &mut DMatrix<f64>, obs: &Observation, pr: &ProjectionResult, eta0: f64) {
    let beta_norm = pr.beta.norm();
    let r_norm = pr.x_perp.norm();
    let x_norm = obs.norm();
    if eta0 == 0.0 || beta_norm <= f64::MIN_POSITIVE || r_norm <= f64::MIN_POSITIVE || x_norm == 0.0
    {
        return;
    }
    let p = &*basis * &pr.beta;
    let eta = eta0 / x_norm;
    let xi = r_norm * p.norm();
    let (sin, cos) = (xi * eta).sin_cos();

    let mut r_dir = DVector::zeros(basis.nrows());
    for (&i, &r) in obs.omega().iter().zip(pr.x_perp.iter()) {
        r_dir[i] = r / r_norm;
    }
    let step = p * ((cos - 1.0) / beta_norm) + r_dir * sin;
    basis.ger(1.0 / beta_norm, &step, &pr.beta, 1.0);
}

/// One PETRELS recursion with forgetting factor `alpha`.
///
/// `pr.beta` supplies the coefficient vector `a` and `pr.x_perp` the per-row
/// prediction errors on `Ω`. Rows outside `Ω` keep their basis row while their
/// `R_m⁻¹` is discounted by `1/alpha`. The result is generally not orthonormal.
pub fn petrels_step(
    basis: &mut DMatrix<f64>,
    state: &mut PetrelsState,
    obs: &Observation,
    pr: &ProjectionResult,
    alpha: f64,
) {
    let a = &pr.beta;
    let inv_alpha = 1.0 / alpha;
    let mut observed = obs.omega().iter().zip(pr.x_perp.iter()).peekable();
    for (m, r_inv) in state.r_inv.iter_mut().enumerate() {
        match observed.next_if(|(&i, _)| i == m) {
            Some((_, &err)) => {
                let ra = &*r_inv * a;
                let denom = alpha + a.dot(&ra);
                r_inv.ger(-1.0 / denom, &ra, &ra, 1.0);
                *r_inv *= inv_alpha;
                symmetrize(r_inv);
                let gain = &*r_inv * a;
                for (col, g) in gain.iter().enumerate() {
                    basis[(m, col)] += err * g;
                }
            }
            None => *r_inv *= inv_alpha,
        }
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Modified Gram-Schmidt with one re-orthogonalization pass. Columns keep
/// their order.
pub fn orthonormalize_gs(basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut q = basis.clone();
    for j in 0..q.ncols() {
        let original = q.column(j).norm();
        for _ in 0..2 {
            for i in 0..j {
                let proj = q.column(i).dot(&q.column(j));
                let qi = q.column(i).clone_owned();
                q.column_mut(j).axpy(-proj, &qi, 1.0);
            }
        }
        let norm = q.column(j).norm();
        if !(norm > COLUMN_COLLAPSE * original.max(1.0)) {
            return Err(MousseError::RankDeficient(format!(
                "column {j} collapsed to norm {norm:e} during Gram-Schmidt"
            )));
        }
        q.column_mut(j).unscale_mut(norm);
    }
    Ok(q)
}

/// Polar orthonormalization `U (UᵀU)^{-1/2}`: the orthonormal matrix with the
/// same column span that is closest to `U` in Frobenius norm.
pub fn orthonormalize_fo(basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = basis.ncols();
    let gram = basis.transpose() * basis;
    if d == 1 {
        let norm = gram[(0, 0)].sqrt();
        if !(norm > COLUMN_COLLAPSE) {
            return Err(MousseError::RankDeficient(format!("column norm {norm:e}")));
        }
        return Ok(basis / norm);
    }
    let eig = gram.symmetric_eigen();
    let max = eig.eigenvalues.max().max(1.0);
    let min = eig.eigenvalues.min();
    if !(min > COLUMN_COLLAPSE * COLUMN_COLLAPSE * max) {
        return Err(MousseError::RankDeficient(format!(
            "Gram matrix smallest eigenvalue {min:e}"
        )));
    }
    let inv_sqrt = DVector::from_iterator(d, eig.eigenvalues.iter().map(|l| 1.0 / l.sqrt()));
    let v = &eig.eigenvectors;
    let gram_inv_sqrt = v * DMatrix::from_diagonal(&inv_sqrt) * v.transpose();
    Ok(basis * gram_inv_sqrt)
}
