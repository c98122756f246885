use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no flags parsed")]
    NoFlagsParsed,
    #[error("invalid flag `{flag}`: {reason}")]
    InvalidFlag { flag: String, reason: String },
    #[error("flag `{0}` is not part of the flag space")]
    UnknownFlag(String),
    #[error("flag `{0}` has no assignment")]
    MissingAssignment(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("component {index} = {value} lies outside [0, 1]")]
    OutOfUnitCube { index: usize, value: f64 },
    #[error("missing column {0}")]
    MissingColumn(String),
    #[error("invalid heap sample: {0}")]
    InvalidHeapSample(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("unsupported polynomial degree {0}")]
    UnsupportedDegree(u8),
    #[error("kernel matrix not positive definite after jitter {0:e}")]
    NotPositiveDefinite(f64),
    #[error("sobol dimension {requested} exceeds the supported {max}")]
    SobolDimension { requested: usize, max: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("target not found: {0}")]
    TargetNotFound(String),
    #[error("cannot characterize target: every seed trial failed")]
    CannotCharacterize,
    #[error("every initial trial failed")]
    AllInitialTrialsFailed,
    #[error("default configuration failed: {0}")]
    DefaultRunFailed(String),
    #[error("metric `{0}` missing from trial")]
    MissingMetric(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
