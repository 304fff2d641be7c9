//! A single ellipsoidal subset `{v = U z + c : zᵀ Λ⁻¹ z ≤ 1}` and its
//! per-sample geometry under partial observation.
//!
//! Every distance here works on the observed coordinates only: the basis is
//! restricted to the rows in `Ω`, the sample is re-centered, and the
//! least-squares coefficients `β` and the in-`Ω` residual `x⊥` drive both the
//! scaled approximate Mahalanobis distance and the scalar parameter updates.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MousseError, Result};

/// Ridge added to the restricted Gram matrix before solving for `β`.
pub const GRAM_RIDGE: f64 = 1e-12;
/// Smallest admissible eigenvalue of the ridged Gram matrix.
pub const GRAM_MIN_EIGENVALUE: f64 = 1e-10;
pub const LAMBDA_FLOOR: f64 = 1e-12;
pub const DELTA_FLOOR: f64 = 1e-12;

/// Position `(level, index)` of a node in the binary multiscale tree.
///
/// The root is `(0, 0)`; node `(j, k)` has parent `(j-1, k/2)` and children
/// `(j+1, 2k)`, `(j+1, 2k+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub level: u32,
    pub index: u64,
}

impl NodeId {
    pub const ROOT: NodeId = NodeId { level: 0, index: 0 };

    pub fn new(level: u32, index: u64) -> Self {
        NodeId { level, index }
    }

    pub fn parent(self) -> Option<NodeId> {
        (self.level > 0).then(|| NodeId::new(self.level - 1, self.index / 2))
    }

    pub fn children(self) -> [NodeId; 2] {
        [
            NodeId::new(self.level + 1, 2 * self.index),
            NodeId::new(self.level + 1, 2 * self.index + 1),
        ]
    }

    pub fn sibling(self) -> Option<NodeId> {
        (self.level > 0).then(|| NodeId::new(self.level, self.index ^ 1))
    }

    /// Ancestors from the parent up to the root.
    pub fn ancestors(self) -> impl Iterator<Item = NodeId> {
        std::iter::successors(self.parent(), |id| id.parent())
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.level, self.index)
    }
}

/// One time step's partially observed vector `P_Ω x_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub t: u64,
    omega: Vec<usize>,
    values: Vec<f64>,
}

impl Observation {
    /// Builds an observation from strictly increasing indices and matching values.
    pub fn new(t: u64, omega: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if omega.is_empty() {
            return Err(MousseError::InvalidObservation("empty support".into()));
        }
        if omega.len() != values.len() {
            return Err(MousseError::InvalidObservation(format!(
                "{} indices but {} values",
                omega.len(),
                values.len()
            )));
        }
        if omega.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MousseError::InvalidObservation(
                "indices must be strictly increasing".into(),
            ));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(MousseError::InvalidObservation(format!("non-finite value {v}")));
        }
        Ok(Observation { t, omega, values })
    }

    /// Fully observed vector.
    pub fn complete(t: u64, x: &[f64]) -> Result<Self> {
        Observation::new(t, (0..x.len()).collect(), x.to_vec())
    }

    /// Dense vector with `NaN` marking missing entries.
    pub fn from_dense(t: u64, x: &[f64]) -> Result<Self> {
        let (omega, values) = x
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_nan())
            .map(|(i, &v)| (i, v))
            .unzip();
        Observation::new(t, omega, values)
    }

    pub fn omega(&self) -> &[usize] {
        &self.omega
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// Euclidean norm over the observed entries.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_complete(&self, dim: usize) -> bool {
        self.omega.len() == dim
    }

    /// Dense vector with zeros (not NaN) at unobserved coordinates.
    pub fn scatter(&self, dim: usize) -> DVector<f64> {
        let mut out = DVector::zeros(dim);
        for (&i, &v) in self.omega.iter().zip(&self.values) {
            out[i] = v;
        }
        out
    }

    /// Dense vector with NaN at unobserved coordinates.
    pub fn scatter_nan(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![f64::NAN; dim];
        for (&i, &v) in self.omega.iter().zip(&self.values) {
            out[i] = v;
        }
        out
    }

    /// Same sample with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Observation {
        Observation {
            t: self.t,
            omega: self.omega.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        match self.omega.last() {
            Some(&last) if last >= dim => Err(MousseError::DimensionMismatch {
                expected: dim,
                got: last + 1,
            }),
            _ => Ok(()),
        }
    }
}

/// Projection coefficients `β` and in-support residual `x⊥` of one sample
/// against one subset.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub beta: DVector<f64>,
    pub x_perp: DVector<f64>,
    pub omega_size: usize,
}

impl ProjectionResult {
    pub fn perp_energy(&self) -> f64 {
        self.x_perp.norm_squared()
    }
}

/// Parameters `{U, c, Λ, δ}` of one subset at tree position `id`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetNode {
    pub basis: DMatrix<f64>,
    pub center: DVector<f64>,
    pub lambdas: DVector<f64>,
    pub delta: f64,
    pub id: NodeId,
    pub is_virtual: bool,
}

impl SubsetNode {
    pub fn new(
        id: NodeId,
        basis: DMatrix<f64>,
        center: DVector<f64>,
        lambdas: DVector<f64>,
        delta: f64,
    ) -> Result<Self> {
        let (dim, d) = basis.shape();
        if d == 0 || d >= dim {
            return Err(MousseError::InvalidConfig(format!(
                "intrinsic dimension {d} must satisfy 1 <= d < D = {dim}"
            )));
        }
        if center.len() != dim {
            return Err(MousseError::DimensionMismatch {
                expected: dim,
                got: center.len(),
            });
        }
        if lambdas.len() != d {
            return Err(MousseError::DimensionMismatch {
                expected: d,
                got: lambdas.len(),
            });
        }
        let mut node = SubsetNode {
            basis,
            center,
            lambdas,
            delta,
            id,
            is_virtual: false,
        };
        node.apply_floors();
        Ok(node)
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.basis.ncols()
    }

    /// `‖UᵀU − I‖_max`.
    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.basis)
    }

    pub(crate) fn apply_floors(&mut self) {
        self.lambdas.apply(|l| *l = l.max(LAMBDA_FLOOR));
        self.delta = self.delta.max(DELTA_FLOOR);
    }

    /// Least-squares fit of `x_Ω − c_Ω` onto the rows of `U` indexed by `Ω`.
    pub fn project(&self, obs: &Observation) -> Result<ProjectionResult> {
        obs.check_dim(self.ambient_dim())?;
        let d = self.intrinsic_dim();
        let omega = obs.omega();
        if omega.len() < d {
            return Err(MousseError::RankDeficient(format!(
                "|Ω| = {} < d = {d}",
                omega.len()
            )));
        }
        let u_omega = self.basis.select_rows(omega);
        let centered = DVector::from_iterator(
            omega.len(),
            omega
                .iter()
                .zip(obs.values())
                .map(|(&i, &v)| v - self.center[i]),
        );
        let beta = solve_ridged(&u_omega, &centered)?;
        let x_perp = &centered - &u_omega * &beta;
        Ok(ProjectionResult {
            beta,
            x_perp,
            omega_size: omega.len(),
        })
    }

    /// Scaled approximate Mahalanobis distance `d_δ = δ βᵀΛ⁻¹β + ‖x⊥‖²`.
    pub fn scaled_distance(&self, pr: &ProjectionResult) -> f64 {
        self.delta * self.in_plane_energy(pr) + pr.perp_energy()
    }

    /// Unscaled approximate Mahalanobis distance `ρ_δ = d_δ / δ`.
    pub fn approx_mahalanobis(&self, pr: &ProjectionResult) -> f64 {
        self.in_plane_energy(pr) + pr.perp_energy() / self.delta
    }

    fn in_plane_energy(&self, pr: &ProjectionResult) -> f64 {
        pr.beta
            .iter()
            .zip(self.lambdas.iter())
            .map(|(b, l)| b * b / l)
            .sum()
    }

    /// Projects and returns the scaled distance in one call.
    pub fn distance_to(&self, obs: &Observation) -> Result<f64> {
        self.project(obs).map(|pr| self.scaled_distance(&pr))
    }

    /// Center, shape and residual-energy recursions. `pr` must have been
    /// computed against the current parameters.
    pub fn update_scalar_params(&mut self, obs: &Observation, pr: &ProjectionResult, alpha: f64) {
        let keep = alpha;
        let take = 1.0 - alpha;
        for (&i, &v) in obs.omega().iter().zip(obs.values()) {
            self.center[i] = keep * self.center[i] + take * v;
        }
        for (lambda, b) in self.lambdas.iter_mut().zip(pr.beta.iter()) {
            *lambda = keep * *lambda + take * b * b;
        }
        let codim = (self.ambient_dim() - self.intrinsic_dim()) as f64;
        self.delta = keep * self.delta + take * pr.perp_energy() / codim;
        self.apply_floors();
    }

    /// Dense residual map: `x⊥` scattered to the observed coordinates, zero
    /// elsewhere.
    pub fn residual_map(&self, obs: &Observation) -> Result<DVector<f64>> {
        let pr = self.project(obs)?;
        let mut out = DVector::zeros(self.ambient_dim());
        for (&i, &r) in obs.omega().iter().zip(pr.x_perp.iter()) {
            out[i] = r;
        }
        Ok(out)
    }

    /// Index of the largest shape eigenvalue (first on ties).
    pub fn dominant_direction(&self) -> usize {
        self.lambdas
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (m, &l)| {
                if l > best.1 {
                    (m, l)
                } else {
                    best
                }
            })
            .0
    }
}

/// Tracking residual `e = sqrt(d_δ)`.
pub fn residual(scaled_distance: f64) -> f64 {
    scaled_distance.max(0.0).sqrt()
}

pub fn orthonormality_error(basis: &DMatrix<f64>) -> f64 {
    let gram = basis.transpose() * basis;
    let d = gram.nrows();
    (&gram - DMatrix::<f64>::identity(d, d)).amax()
}

/// Solves `(AᵀA + ridge·I) x = Aᵀ y`, rejecting ill-conditioned systems.
pub(crate) fn solve_ridged(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let d = a.ncols();
    let mut gram = a.transpose() * a;
    for m in 0..d {
        gram[(m, m)] += GRAM_RIDGE;
    }
    let min_eig = if d == 1 {
        gram[(0, 0)]
    } else {
        gram.clone().symmetric_eigenvalues().min()
    };
    if !(min_eig > GRAM_MIN_EIGENVALUE) {
        return Err(MousseError::RankDeficient(format!(
            "restricted Gram matrix has smallest eigenvalue {min_eig:e}"
        )));
    }
    let rhs = a.transpose() * y;
    gram.cholesky()
        .map(|chol| chol.solve(&rhs))
        .ok_or_else(|| MousseError::RankDeficient("Cholesky factorization failed".into()))
}
