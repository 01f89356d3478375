use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("I/O error: {0}")]
    Stream(#[from] std::io::Error),
    #[error("no valid ticks in input ({rows_read} rows read)")]
    EmptySeries { rows_read: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("window {window_id}: {message}")]
    Window { window_id: usize, message: String },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
