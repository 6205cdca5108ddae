use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// One bad record in a line-oriented input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for RecordError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Config(String),

    #[error("cell ({row}, {col}, category {category}) is outside a {rows}x{cols}x{categories} grid")]
    Bounds {
        row: usize,
        col: usize,
        category: usize,
        rows: usize,
        cols: usize,
        categories: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{path}: {} malformed record(s); first: {}", errors.len(), errors.first().map(|e| e.to_string()).unwrap_or_default())]
    Parse { path: PathBuf, errors: Vec<RecordError> },

    #[error("flight record {index}: field `{field}` = {value} outside [{min}, {max}]")]
    Validation {
        index: usize,
        field: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("flight record {index}: timestamp {t} ms precedes previous record at {previous} ms")]
    Ordering { index: usize, t: u64, previous: u64 },

    #[error("no flight record within {max_gap_ms} ms for frame(s): {}", frames.join(", "))]
    Join { frames: Vec<String>, max_gap_ms: u64 },

    #[error("no empty eligible cell left for injection (needed {needed}, eligible {eligible})")]
    Saturation { needed: usize, eligible: usize },

    #[error("source sample {index}: {source}")]
    Source {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite value in {0}")]
    Numeric(String),

    #[error("{0}")]
    Argument(String),

    #[error("checkpoint format: {0}")]
    Format(String),
}

/// Coarse grouping used for process exit codes and machine-readable reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Validation,
    Numeric,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Argument(_) => ErrorClass::Usage,
            Error::Numeric(_) => ErrorClass::Numeric,
            Error::Source { source, .. } => source.class(),
            _ => ErrorClass::Validation,
        }
    }

    /// Short stable identifier for JSON error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Config(_) => "config",
            Error::Bounds { .. } => "bounds",
            Error::Shape(_) => "shape",
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::Ordering { .. } => "ordering",
            Error::Join { .. } => "join",
            Error::Saturation { .. } => "saturation",
            Error::Source { source, .. } => source.kind(),
            Error::Numeric(_) => "numeric",
            Error::Argument(_) => "argument",
            Error::Format(_) => "format",
        }
    }
}
