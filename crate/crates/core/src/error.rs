use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("field has nonzero mean {0}; operation is defined on zero-mean fields only")]
    NonZeroMean(f64),
    #[error("truncation mismatch: {left} vs {right}")]
    TruncationMismatch { left: usize, right: usize },
    #[error("cannot project truncation {m} onto higher level {target}")]
    ProjectionAbove { target: usize, m: usize },
    #[error("grid of {n_grid} points cannot resolve {m} modes (need at least {})", 2 * .m + 1)]
    GridTooCoarse { n_grid: usize, m: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("path diverged at step {step} (t = {time}): l2 norm {norm:e} exceeds guard")]
    Diverged { step: usize, time: f64, norm: f64 },
    #[error("invalid configuration: {key}: {reason}")]
    InvalidConfig { key: &'static str, reason: String },
    #[error("time {time} is not a multiple of dt = {dt}")]
    OffGrid { time: f64, dt: f64 },
    #[error("noise truncation {noise} does not match field truncation {field}")]
    NoiseMismatch { noise: usize, field: usize },
}

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("noise is not admissible: nu^3 = {nu_cubed} < 4*pi*|A^-1/2 Q|^2 = {threshold}")]
    Inadmissible { nu_cubed: f64, threshold: f64 },
    #[error("intrinsic distance |x - y|_Q is infinite")]
    InfiniteQNorm,
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("noise has a zero amplitude; the estimate needs every q_k > 0")]
    DegenerateNoise,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("config schema violation: {0}")]
    Schema(String),
    #[error("invalid config value for \"{key}\": {reason}")]
    Invalid { key: String, reason: String },
    #[error("noise is not admissible: nu^3 = {nu_cubed} < 4*pi*|A^-1/2 Q|^2 = {threshold}")]
    Inadmissible { nu_cubed: f64, threshold: f64 },
}

impl ConfigError {
    pub fn invalid(key: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error("unknown experiment \"{name}\"; choose one of: {choices}")]
    Unknown { name: String, choices: String },
}

impl From<SimError> for ExperimentError {
    fn from(e: SimError) -> Self {
        ExperimentError::Estimate(e.into())
    }
}

impl From<SpectralError> for ExperimentError {
    fn from(e: SpectralError) -> Self {
        ExperimentError::Estimate(e.into())
    }
}
