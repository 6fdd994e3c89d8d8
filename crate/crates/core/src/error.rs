use thiserror::Error;

/// Crate-wide error type. Variants are coarse on purpose: callers dispatch on
/// the kind, messages carry the specifics.
#[derive(Debug, Error)]
pub enum Error {
    /// Point lies outside the chart domain of the manifold.
    #[error("outside chart domain: {0}")]
    OutsideChart(String),

    /// The query is well posed but not representable in the supported
    /// reductions (radial, product, locally flat).
    #[error("unsupported geometry query: {0}")]
    UnsupportedGeometry(String),

    /// Parameter outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Optimizer stopped at max_iters with the certificate still open.
    /// Carries the best iterate so callers can inspect or accept it.
    #[error("not converged: relative duality gap {gap:.3e} after {iters} iterations")]
    NotConverged {
        gap: f64,
        iters: usize,
        result: Box<crate::capacity::CapacityResult>,
    },

    /// Invalid experiment configuration (unknown key, bad value, bad grammar).
    #[error("config error: {0}")]
    Config(String),

    /// Input violates a stated precondition of the experiment.
    #[error("rejected input: {0}")]
    RejectedInput(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
