use thiserror::Error;

use crate::subset::NodeId;

/// Errors raised by the tracker, detector and harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MousseError {
    /// The restricted basis cannot be inverted on the observed coordinates.
    #[error("rank deficient projection: {0}")]
    RankDeficient(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("split of {0} declined: depth limit reached")]
    DepthLimit(NodeId),

    #[error("merge of {0} declined: sibling is not a leaf")]
    SiblingNotLeaf(NodeId),

    #[error("node {0} is not a leaf")]
    NotALeaf(NodeId),

    #[error("detector baseline (mu0, sigma0) has not been set")]
    NotCalibrated,

    #[error("degenerate baseline: residual standard deviation {0:e} is below 1e-12")]
    DegenerateBaseline(f64),

    #[error("no threshold brackets target ARL {target}: achievable range is [{min:.3}, {max:.3e}]")]
    NoBracket { target: f64, min: f64, max: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid observation: {0}")]
    InvalidObservation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for MousseError {
    fn from(err: std::io::Error) -> Self {
        MousseError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, MousseError>;
