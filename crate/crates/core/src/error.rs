use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected:?}, found {found:?}")]
    Dimension {
        what: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("non-finite loss at step {step} in term {term} (max |grad| = {max_grad:e})")]
    NonFinite {
        step: usize,
        term: &'static str,
        max_grad: f64,
    },

    #[error("view {view}: {source}")]
    View {
        view: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
