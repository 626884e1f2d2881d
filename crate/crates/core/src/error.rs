use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path} (line {line}): {message}")]
    Json {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unsupported schema_version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("truncated matrix {name}: expected {expected} bytes, found {found}")]
    Truncated {
        name: String,
        expected: u64,
        found: u64,
    },

    #[error("non-finite value in {name} at row {row}, column {col}")]
    NonFinite { name: String, row: usize, col: usize },

    #[error("dangling reference: {0}")]
    DanglingRef(String),

    #[error("digest mismatch for {name}: manifest {expected}, file {found}")]
    DigestMismatch {
        name: String,
        expected: String,
        found: String,
    },

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("{name} row {row} has zero norm")]
    ZeroVector { name: String, row: usize },

    #[error("{name} row {row} has norm {norm}, expected unit norm")]
    NotNormalized { name: String, row: usize, norm: f64 },

    #[error("corpus has no contexts to index")]
    EmptyCorpus,

    #[error("median heuristic needs at least 2 points, got {0}")]
    TooFewPoints(usize),

    #[error("neighborhood contains no responses")]
    EmptyNeighborhood,

    #[error("global reference set is empty")]
    EmptyReferenceSet,

    #[error("no preference pairs to evaluate")]
    EmptyPairSet,

    #[error("no labeled training pairs among the nearest contexts")]
    NoLabeledNeighbors,

    #[error("pair {0:?} has no score_ratio")]
    MissingScoreRatio(String),

    #[error("score_ratio has no variance across pairs")]
    NoVariance,

    #[error("invalid train sizes: {0}")]
    InvalidSizes(String),

    #[error("pool {context_id:?} has {found} candidates, need at least 2")]
    TooFewCandidates { context_id: String, found: usize },

    #[error("neighborhood has {0} responses, leave-one-out calibration needs at least 3")]
    NeighborhoodTooSmall(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
