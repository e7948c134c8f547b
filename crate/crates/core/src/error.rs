use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A domain description that cannot support the requested operation
    /// (zero slack at the center, empty interior, unbounded polytope).
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    /// A point outside the region where an operation is defined.
    #[error("point outside domain: {0}")]
    OutsideDomain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonNoConvergence { iterations: usize, residual: f64 },

    #[error("root finder failed on bracket [{lo}, {hi}] (f(lo)={f_lo:e}, f(hi)={f_hi:e})")]
    RootBracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub(crate) fn check_finite(what: &str, xs: &[f64]) -> Result<()> {
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{what} contains NaN or infinite entries")));
    }
    Ok(())
}
