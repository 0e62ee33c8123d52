use thiserror::Error;

/// Errors raised by array, operator, network and training code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("shape mismatch: expected {expected:?}, got {got:?} ({context})")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
        context: String,
    },

    #[error("stride pattern reaches offset {offset} outside buffer of length {len}")]
    OutOfBounds { offset: isize, len: usize },

    #[error("invalid dimension flags {flags:#x} for rank {rank}")]
    InvalidFlags { flags: u32, rank: usize },

    #[error("index {index} out of range ({what}, {len} available)")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("stale derivative: operator evaluated again since the derivative was taken (generation {held}, current {current})")]
    StaleDerivative { held: u64, current: u64 },

    #[error("derivative requested before any forward evaluation")]
    NoForwardState,

    #[error("input {0} is not differentiable")]
    NotDifferentiable(usize),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("unknown argument name `{0}`")]
    UnknownName(String),

    #[error("duplicate argument name `{0}`")]
    DuplicateName(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("solver did not converge: relative residual {residual:e} after {iterations} iterations")]
    SolverFailure { residual: f64, iterations: usize },

    #[error("numerical breakdown in {0}")]
    Breakdown(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn mismatch(expected: &[usize], got: &[usize], context: impl Into<String>) -> Error {
    Error::ShapeMismatch {
        expected: expected.to_vec(),
        got: got.to_vec(),
        context: context.into(),
    }
}
