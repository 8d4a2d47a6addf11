use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("column {column} contains tied values")]
    TiesPresent { column: usize },

    #[error("kernel denominator is not positive ({denominator:e}); bandwidth {sigma} is numerically degenerate for n = {n}")]
    NumericalUnderflow { sigma: f64, n: usize, denominator: f64 },

    #[error("instance too large: {evaluations} kernel evaluations exceed the limit of {limit}")]
    InstanceTooLarge { evaluations: u128, limit: u128 },

    #[error("expected dimension {expected}, got {actual}")]
    WrongDimension { expected: usize, actual: usize },

    #[error("argument out of domain: {0}")]
    DomainError(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("null table does not match the request: {0}")]
    TableMismatch(String),

    #[error("corrupt null table: {0}")]
    CorruptTable(String),

    #[error("unsupported null table format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),

    #[error("invalid generator parameter: {0}")]
    InvalidParam(String),

    #[error("subsample size {k} exceeds the {rows} available rows")]
    CsvTooSmall { k: usize, rows: usize },

    #[error("malformed CSV {path}: {message}")]
    MalformedCsv { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
