use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("paths live on different lattices")]
    LatticeMismatch,
    #[error("matrix is not symmetric positive-definite: {0}")]
    NotPositiveDefinite(String),
    #[error("Gauss-Hermite quadrature limited to dim <= {max}, got {dim}")]
    QuadratureGuard { dim: usize, max: usize },
    #[error("transformation is not admissible at alpha = {alpha}: singular Jacobian")]
    SingularJacobian { alpha: f64 },
    #[error("Jacobian unavailable for field `{0}`")]
    JacobianUnavailable(String),
    #[error("step size underflow at alpha = {alpha}")]
    StepUnderflow { alpha: f64 },
    #[error("unsupported problem: {0}")]
    Unsupported(String),
    #[error("integral does not converge: {0}")]
    Divergent(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
