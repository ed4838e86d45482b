use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("inverse temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),

    #[error("chain is at beta = {got}, expected the WBIC temperature 1/log n = {expected}")]
    WrongTemperature { expected: f64, got: f64 },

    #[error("non-finite log-density at observation {index}")]
    NonFiniteLogDensity { index: usize },

    #[error("non-finite value at draw {index}")]
    NonFiniteDraw { index: usize },

    #[error("non-finite target at the initial point {0:?}")]
    NonFiniteInitialTarget(Vec<f64>),

    #[error("model `{0}` has no truth sampler; load observations from CSV instead")]
    NoTruthSampler(String),

    #[error("model `{0}` does not provide log-density gradients (required by MALA)")]
    GradientUnavailable(String),

    #[error("invalid sampler configuration: {0}")]
    InvalidSamplerConfig(String),

    #[error("not enough draws: need at least {needed}, have {have}")]
    NotEnoughDraws { needed: usize, have: usize },

    #[error("chains have unequal lengths")]
    UnequalChains,

    #[error("posterior mass outside the parameter box is {mass:e}, exceeding 1e-12")]
    TruncationMass { mass: f64 },

    #[error("quadrature: {0}")]
    Quadrature(String),

    #[error("n = {0} is too small; this estimator needs n >= 3")]
    SampleTooSmall(usize),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
