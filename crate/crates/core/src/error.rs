use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the stresswatch pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("schema error: missing required column `{column}`")]
    MissingColumn { column: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("row {row}: {message}")]
    Row { row: u64, message: String },

    #[error("line {line}: {message}")]
    Line { line: usize, message: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in feature part `{part}`")]
    NonFinite { part: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training data contains a single class; both labels 0 and 1 are required")]
    SingleClass,

    #[error("feature pipeline has not been fitted")]
    NotFitted,

    #[error("empty vocabulary: no token reaches min_count {min_count}")]
    EmptyVocabulary { min_count: usize },

    #[error("corrupt model artifact: {0}")]
    CorruptArtifact(String),

    #[error("unsupported artifact schema version `{found}` (expected `{expected}`)")]
    VersionMismatch { found: String, expected: String },

    #[error("corrupt segment {segment} at byte {position}: {message}")]
    CorruptSegment {
        segment: PathBuf,
        position: u64,
        message: String,
    },

    #[error("payload of {len} bytes exceeds the {max} byte limit")]
    Oversize { len: usize, max: usize },

    #[error("offset {offset} out of range (next offset is {next})")]
    OffsetOutOfRange { offset: u64, next: u64 },

    #[error("invalid name `{0}`: must match [a-z0-9_-]{{1,64}}")]
    InvalidName(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("DAG error: {0}")]
    Dag(String),

    #[error("unknown run `{0}`")]
    UnknownRun(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
