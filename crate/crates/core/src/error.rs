use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("line {line}: unknown subclass code {code:?}")]
    UnknownSubclass { line: usize, code: String },
    #[error("unknown subclass code {0:?}")]
    UnknownCode(String),
    #[error("line {line}: duplicate case id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: case {id:?} has empty text")]
    EmptyText { line: usize, id: String },
    #[error("invalid taxonomy: {0}")]
    InvalidTaxonomy(String),
    #[error("class {code}: requested {requested} test cases but only {available} available")]
    InsufficientCases {
        code: String,
        requested: usize,
        available: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("{0}")]
    InvalidArgument(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("unknown token {0:?}")]
    UnknownToken(String),
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("training set has a single class {0:?}")]
    SingleClass(String),
    #[error("label {0:?} does not occur in the training data")]
    UnseenLabel(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },
    #[error("checkpoint is corrupted: {0}")]
    Corrupted(String),
    #[error("checkpoint holds a {found} model, expected {expected}")]
    KindMismatch { found: String, expected: String },
    #[error("reports are not comparable: {0}")]
    InconsistentReports(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad user input (flags, files, configs) as
    /// opposed to internal or I/O failures.
    pub fn is_usage(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::ShapeMismatch { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
