use std::path::PathBuf;

/// Errors produced by the selection, modelling and I/O layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("unsupported size: {0}")]
    UnsupportedSize(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("format error: {0}")]
    Format(#[from] FormatError),

    #[error("scorer failed on {failed} of {total} items")]
    PartialResults {
        failed: usize,
        total: usize,
        /// Scores for the items that succeeded, `None` where every retry failed.
        scores: Vec<Option<f64>>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Parse failures for the dataset container, parameter file and embedding tables.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("magic mismatch: expected {expected:?}, found {found:?}")]
    MagicMismatch { expected: String, found: String },

    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated input at byte offset {offset}: {context}")]
    Truncated { offset: u64, context: String },

    #[error("dimension inconsistency: {0}")]
    Dimension(String),

    #[error("token id {token} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { token: u32, vocab_size: u32 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
