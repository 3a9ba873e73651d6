use thiserror::Error;

/// Errors raised by graph, game, oracle, seeker and harness operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("{what} did not converge within {iters} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iters: usize,
        residual: f64,
    },

    #[error("invalid delta: {0}")]
    InvalidDelta(#[from] crate::graph::DeltaViolation),

    #[error("spectral certificate is not valid: gamma = {0} >= 1")]
    InvalidCertificate(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cost evaluation failed for player {player}: {message}")]
    EvaluationFailure { player: usize, message: String },

    #[error("smoothing parameter must be positive, got {0}")]
    DegenerateSmoothing(f64),

    #[error("equilibrium coordinate {player} = {value} is not strictly inside [{lo}, {hi}]")]
    NotInterior {
        player: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("first-order system is singular")]
    SingularSystem,

    #[error("game mapping is not strongly monotone (chi = {0})")]
    NotMonotone(f64),

    #[error("gradient-based mode requires a gradient evaluator")]
    MissingGradient,

    #[error("state became non-finite at iteration {0}")]
    NumericOverflow(usize),

    #[error("reference point has zero norm")]
    DegenerateReference,

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
