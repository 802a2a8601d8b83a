use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Caller violated a precondition (bad parameter, off-grid time, ...).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// A probe family whose coefficient matrix does not have full column rank.
    #[error("dual family is rank deficient: rank {rank} < dim {dim}")]
    RankDeficient { rank: usize, dim: usize },

    /// The pairings are not realized by any single vector.
    #[error("Pettis property violated: reconstruction residual {residual:.3e} exceeds {tol:.3e}")]
    PettisViolation { residual: f64, tol: f64 },

    /// Overflow, NaN or an otherwise non-finite intermediate.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// No scalar link r with Ψ(t) = r(t)·Φ(t) exists at some node.
    #[error("no valid drift link r at t = {t}: relative residual {residual:.3e}")]
    NoValidDrift { t: f64, residual: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}
