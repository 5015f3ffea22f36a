use thiserror::Error;

/// Errors raised by graph queries, cumulant estimation and the effect estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown node {0}")]
    UnknownNode(usize),

    #[error("cumulant order {0} is not supported (expected 2..=6)")]
    UnsupportedOrder(usize),

    #[error("insufficient sample: n = {n} is smaller than order {order}")]
    InsufficientSample { n: usize, order: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Raised when the data sit on (or numerically near) a non-generic parameter set.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("polynomial has no real root (max |imag| = {max_imag:.3e})")]
    NoRealRoot { max_imag: f64 },

    #[error("near-singular Vandermonde system: {0}")]
    NearSingular(String),

    #[error("ill-conditioned adjustment: {0}")]
    IllConditioned(String),

    #[error("no valid candidate: every candidate run failed")]
    NoValidCandidate,

    #[error("degenerate ratio: denominator {0:.3e} is too small")]
    DegenerateRatio(f64),

    #[error("invalid instrument: {0}")]
    InvalidInstrument(String),

    #[error("constraint set is infeasible (residual {0:.3e})")]
    ConstraintInfeasible(f64),

    #[error("relative error undefined for true value {0:.3e}")]
    UndefinedMetric(f64),

    #[error("graph is not canonical: {0}")]
    NonCanonical(String),

    #[error("covariates are rank deficient; dependent columns: {0:?}")]
    RankDeficient(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
