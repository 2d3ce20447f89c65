use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("ragged row at line {line}: expected {expected} cells, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("target column `{0}` not found")]
    TargetNotFound(String),

    #[error("target not binary: column `{column}` has {labels} distinct labels")]
    TargetNotBinary { column: String, labels: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("technique {0} is not applicable to this dataset")]
    NotApplicable(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient minority class: label `{label}` has {count} instances, need at least {needed}")]
    InsufficientMinorityClass {
        label: String,
        count: usize,
        needed: usize,
    },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("undefined baseline: percentage difference against a zero baseline")]
    UndefinedBaseline,

    #[error("config error: {0}")]
    Config(String),

    #[error("missing external results: run the external harness on task file {task}, expected output at {expected}")]
    MissingExternalResults { task: PathBuf, expected: PathBuf },

    #[error("missing inputs for analysis: {0}")]
    MissingStages(String),

    #[error("training failed: {0}")]
    Training(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
