use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range in direction {direction}: valid range is 0..{count}")]
    IndexOutOfRange {
        direction: usize,
        index: usize,
        count: usize,
    },

    #[error("linear index {index} out of range: valid range is 1..={n_dof}")]
    LinearIndexOutOfRange { index: usize, n_dof: usize },

    #[error("coordinate {value} in direction {direction} lies outside [{lo}, {hi}]")]
    PointOutsideBox {
        direction: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("direction {direction} out of range for dimension {dim}")]
    DirectionOutOfRange { direction: usize, dim: usize },

    #[error("not a permutation image of 1..={dim}: {image:?}")]
    InvalidPermutation { image: Vec<usize>, dim: usize },

    #[error("box is not cubic across directions {i} and {j} exchanged by the permutation")]
    NonCubicBox { i: usize, j: usize },

    #[error("domain unsuitable for symmetry check: {reason}")]
    AsymmetricDomain { reason: String },

    #[error("invalid grid: {reason}")]
    InvalidGrid { reason: String },

    #[error("invalid scale pair: {reason}")]
    InvalidScalePair { reason: String },

    #[error("non-finite {what} at point {point:?}")]
    NonFiniteSample { what: &'static str, point: Vec<f64> },

    #[error(
        "linear solver stalled after {iterations} iterations: residual {residual:.3e} > target {target:.3e}"
    )]
    SolverStalled {
        iterations: usize,
        residual: f64,
        target: f64,
    },

    #[error("eigenvalue solver stalled after {iterations} outer iterations: {reason}")]
    EigenStalled { iterations: usize, reason: String },

    #[error("inconsistent combination components: {reason}")]
    InconsistentComponents { reason: String },

    #[error("invalid configuration: {reason}")]
    InvalidConfig { reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
