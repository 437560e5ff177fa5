//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A vector or segment had the wrong length.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// A dimension parameter is invalid (zero, not a multiple of 8, ...).
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    /// An operation that needs at least one element got none.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// The label table ran out of representable tids.
    #[error("capacity exceeded: tid space exhausted at {0}")]
    Capacity(i64),

    /// Normalisation over a zero denominator (e.g. `max_paths = 0`).
    #[error("undefined normalization: {0}")]
    UndefinedNormalization(&'static str),

    /// A CSV or snapshot row could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    /// A file had the wrong header, magic or version.
    #[error("format error: {0}")]
    Format(String),

    /// Start nodes that do not exist in the learned graph.
    #[error("unknown start nodes: {}", .0.join(", "))]
    UnknownStarts(Vec<String>),

    /// Invalid run configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map_or(0, |p| p.line());
        match e.kind() {
            csv::ErrorKind::Io(_) => Error::Format(e.to_string()),
            _ => Error::Parse {
                line,
                msg: e.to_string(),
            },
        }
    }
}
