use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension {dim} exceeds the configured maximum {max}")]
    Overflow { dim: usize, max: usize },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("basis is rank deficient: smallest/largest singular value ratio {ratio:.3e}")]
    RankDeficient { ratio: f64 },

    #[error("time tuple has length {found}, field expects {expected}")]
    ArityMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for {len} time variables")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("path starts at {path:?} but the state is at {state:?}")]
    PathStartMismatch { path: Vec<f64>, state: Vec<f64> },

    #[error("path endpoints differ: {a:?} vs {b:?}")]
    EndpointMismatch { a: Vec<f64>, b: Vec<f64> },

    #[error("operator is not Hermitian (defect {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("partition is trivial: projector rank {rank} in dimension {dim}")]
    TrivialPartition { rank: usize, dim: usize },

    #[error("resolvent is singular at energy {re}{im:+}i (smallest singular value {sigma_min:.3e})")]
    ResolventSingular { re: f64, im: f64, sigma_min: f64 },

    #[error("state is not in the subspace (leakage {leakage:.3e})")]
    NotInSubspace { leakage: f64 },

    #[error("state is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema error in field `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("refusing non-Hermitian `{matrix}` (defect {defect:.3e}); pass --allow-non-hermitian to override")]
    GateRefusal { matrix: String, defect: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn dims(expected: usize, found: usize) -> Self {
        Error::DimensionMismatch { expected, found }
    }
}
