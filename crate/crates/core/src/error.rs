use std::path::PathBuf;

/// Errors raised anywhere in the laboratory.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid bounds: x_max ({x_max}) must exceed x_min ({x_min})")]
    InvalidBounds { x_min: f64, x_max: f64 },

    #[error("grid needs at least 3 nodes, got {0}")]
    TooFewNodes(usize),

    #[error("field has {got} values but the grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value {value} at node {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },

    #[error("quantum matching is impossible at zero temperature")]
    ZeroTemperature,

    #[error("density vanishes at interior node {index} (x = {x})")]
    NodeAtZero { index: usize, x: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e}, tolerance {tolerance:e})")]
    Convergence {
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("wavefunction collapsed to a node at index {index} (x = {x})")]
    NodeCollapse { index: usize, x: f64 },

    #[error("time step too large: |b dt| = {drift_step:e} exceeds 10 h = {limit:e}")]
    StepInstability { drift_step: f64, limit: f64 },

    #[error("histogram needs at least one sample")]
    EmptySample,

    #[error("kernel evolution unstable at t = {time}: {detail}")]
    KernelInstability { time: f64, detail: String },

    #[error("backward check needs at least 3 positive time columns, got {0}")]
    InsufficientTimes(usize),

    #[error("quadrature tail bound {tail:e} exceeds budget {budget:e}")]
    QuadratureBudget { tail: f64, budget: f64 },

    #[error("time step {dt:e} under-resolves the preacceleration kernel (need dt <= tau/20 = {limit:e})")]
    StepResolution { dt: f64, limit: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("invalid value for `{key}`: {message}")]
    Validation { key: String, message: String },

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn validation(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
