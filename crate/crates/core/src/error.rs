use thiserror::Error;

/// Errors raised while building, validating or simulating a model.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed input: wrong shapes, NaN entries, unknown presets.
    #[error("configuration error: {0}")]
    Config(String),
    /// An argument outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("operation `{op}` is not supported on the {backend} backend")]
    UnsupportedBackend { op: &'static str, backend: &'static str },
    /// Principal eigenvalue is not positive (the process is not supercritical).
    #[error("supercriticality violated: lambda1 = {lambda1} (requires λ₁>0)")]
    Supercriticality { lambda1: f64 },
    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },
    /// Every replica overflowed or too few bins survived lumping.
    #[error("inconclusive: {0}")]
    Inconclusive(String),
}

pub type Result<T> = std::result::Result<T, Error>;
