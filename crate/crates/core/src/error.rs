use thiserror::Error;

/// Failures raised by the numerical kernel and the control solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("matrix is singular (condition estimate {condition:.3e})")]
    Singular { condition: f64 },
    #[error("eigenvalue iteration did not converge (residual {residual:.3e})")]
    NoConvergence { residual: f64 },
    #[error("matrix exponential overflowed")]
    Overflow,
    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate parameters on edge {edge}: {reason}")]
    Degenerate { edge: usize, reason: String },
    #[error("not solvable: {0}")]
    Unsolvable(String),
    #[error("closed-form structure violated: {0}")]
    StructureViolation(String),
    #[error("stale feedback gains: {0}")]
    StaleGains(String),
    #[error("Lyapunov operator is singular: the closed loop is marginally stable")]
    MarginalStability,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
