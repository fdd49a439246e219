use std::path::PathBuf;

/// Errors raised anywhere in the engine, its loaders and writers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("window {window_id}: dimensionality drifted from {expected} to {found}")]
    DimensionDrift {
        window_id: u64,
        expected: usize,
        found: usize,
    },

    #[error("chromosome record of length {len} does not fit d={d}: expected 2 + K*{d} slots with K >= 1")]
    ChromosomeArity { len: usize, d: usize },

    #[error("label length mismatch: {left} vs {right}")]
    LabelLengthMismatch { left: usize, right: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unknown tree node {0}")]
    UnknownNode(u64),

    #[error("archive member ({compactness}, {separateness}) lies outside the reference box")]
    OutsideReference { compactness: f64, separateness: f64 },

    #[error("input is empty")]
    EmptyInput,

    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("label column {col} out of range for rows of width {width}")]
    LabelColumnOutOfRange { col: usize, width: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
