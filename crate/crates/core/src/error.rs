use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("unknown catalog entry `{0}`")]
    UnknownCatalogEntry(String),

    #[error("non-finite value at node {index}")]
    NonFinite { index: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("{what}: no convergence after {iterations} iterations (last sup-delta {last_delta:e})")]
    IterationCap {
        what: &'static str,
        iterations: usize,
        last_delta: f64,
    },

    #[error("{what}: iterates diverged (sup {sup:e} exceeds ceiling {ceiling:e})")]
    Divergence { what: &'static str, sup: f64, ceiling: f64 },

    #[error("no root found: {0}")]
    NoRoot(String),

    #[error("divergent integral: {0}")]
    DivergentIntegral(String),

    #[error("rate constant k = {k} lies outside (0, 1); the concavity minorant is not admissible")]
    RateOutOfRange { k: f64 },

    #[error("sandwich bound violated by {excess:e} at x = {x}")]
    SandwichViolation { x: f64, excess: f64 },

    #[error("chi denominator {value:e} at interior node x = {x}; grid too coarse near the origin")]
    DegenerateChi { x: f64, value: f64 },

    #[error("cross-start distance {distance:e} exceeds {tolerance:e}")]
    UniquenessMismatch { distance: f64, tolerance: f64 },

    #[error("rate fit needs more than {need} iterations, trace has {have}")]
    InsufficientIterations { have: usize, need: usize },

    #[error("report parts come from different configurations ({0} vs {1})")]
    ConfigMismatch(String, String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
