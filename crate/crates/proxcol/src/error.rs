//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A vector or matrix argument has the wrong size.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A shape, robot, or workspace fails its construction invariants.
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    /// Bad argument outside the geometry domain (empty dataset, non-±1 label, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// `minimal_translation_distance` was called on a non-overlapping pair.
    #[error("shapes are disjoint; no penetration to measure")]
    DisjointShapes,

    /// Perceptron picked an update row whose kernel self-similarity is zero.
    #[error("kernel diagonal is zero at row {index}; cannot take a perceptron step")]
    KernelDiagonalZero { index: usize },

    /// Too few support configurations to fit an interpolant.
    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    /// Model file carries an unknown version tag.
    #[error("unsupported model version {found:?} (expected {expected:?})")]
    ModelVersion { found: String, expected: String },

    /// Rejection sampling ran out of budget (over-constrained scene or seed).
    #[error("sampling budget exhausted: {0}")]
    SamplingBudget(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
