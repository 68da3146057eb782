use thiserror::Error;

/// Errors raised by the selection, conditioning and inference routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid randomization scheme: {0}")]
    InvalidScheme(String),

    #[error("integrand has no mass on the quadrature grid")]
    EmptyMass,

    #[error("no root: target {target} not bracketed after {expansions} expansions (last bracket [{lower}, {upper}])")]
    NoRoot {
        target: f64,
        expansions: usize,
        lower: f64,
        upper: f64,
    },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error(
        "selection outcome inconsistent with its linear representation (residual {residual:e})"
    )]
    InconsistentOutcome { residual: f64 },

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("conditioning geometry inconsistent: {0}")]
    GeometryInconsistency(String),

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("insufficient sample: {got} pooled values, need at least {need}")]
    InsufficientSample { got: usize, need: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
