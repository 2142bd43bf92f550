use thiserror::Error;

use crate::solver::SolverResult;

/// Errors raised by graph construction, solvers and the learning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Vector or matrix sizes do not agree with the instance they belong to.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A matching-constraint invariant was violated (row/column sums,
    /// conflicting fixations, branching a fully fixed node, ...).
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),

    /// A NaN or infinity showed up where a finite value is required.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// Triangulation input that admits no triangle (too few points,
    /// collinear configuration, coincident points).
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// A configuration parameter is outside its documented bounds.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A metric is undefined for the given input (e.g. accuracy against an
    /// all-zero ground truth).
    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),

    /// An exhaustive reference routine was asked to enumerate something too
    /// large for brute force.
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    /// The branch-and-bound node cap was hit before the requested quality
    /// level was proven. The best incumbent found so far is attached.
    #[error("resource exhausted after expanding {} tree nodes (gap {:.6})", .0.tree_nodes_expanded, .0.gap)]
    ResourceExhausted(Box<SolverResult>),

    /// Instance (de)serialization failure.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
