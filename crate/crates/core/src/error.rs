use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A hyperparameter lies outside the admissible range of its family.
    #[error("parameter out of range: {0}")]
    Domain(String),

    #[error("invalid dimension: {0}")]
    Dimension(String),

    #[error("singular Toeplitz operator: leading coefficient is zero")]
    SingularOperator,

    /// The band data admit no positive definite extension. `block` is the
    /// 1-based index of the first sliding block that is not positive definite.
    #[error("infeasible band extension{}", match .block {
        Some(b) => format!(": sliding block {b} is not positive definite"),
        None => String::from(": leading submatrix is not positive definite"),
    })]
    InfeasibleExtension { block: Option<usize> },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("ill-conditioned problem: {0}")]
    Conditioning(String),

    #[error("stationary decomposition failed: spread {spread:e} exceeds tolerance {tol:e}")]
    Decomposition { spread: f64, tol: f64 },

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
