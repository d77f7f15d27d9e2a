use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("invalid map: {0}")]
    Invalid(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("map generation failed: {0}")]
    Generation(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("samples mix clamp bounds k={expected} and k={found}")]
    MixedK { expected: u16, found: u16 },
    #[error("tables are incompatible: {0}")]
    Mismatch(String),
    #[error("model has no stored keys")]
    EmptyModel,
    #[error("table format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("distribution has no mass")]
    ZeroMass,
    #[error("invalid decode parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum RuinError {
    #[error("invalid walk parameters: {0}")]
    InvalidParams(String),
    #[error("start cell z={z} is closer to the far wall (a={a}); mirror the walk first")]
    FarSide { z: u32, a: u32 },
    #[error("pmf at t={t} lost all significance in cancellation")]
    PrecisionLoss { t: u64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("metric is undefined: {0}")]
    Undefined(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}
