use thiserror::Error;

/// Errors raised by the solvers and domain types.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input violates a mathematical precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two operands have incompatible shapes.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The kernel `exp(-C/eps)` underflowed in the plain (non-log) solver.
    #[error("kernel exp(-C/eps) underflows at ({row}, {col}) with eps = {epsilon}; retry with log_domain = true")]
    KernelUnderflow { row: usize, col: usize, epsilon: f64 },

    /// The marginal constraints cannot be met on the given kernel support.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// An inner numerical routine failed.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// An iterative solver hit its iteration cap.
    #[error("did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    /// Unsupported or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// The requested instance is too large for a brute-force routine.
    #[error("capability exceeded: {0}")]
    Capability(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
