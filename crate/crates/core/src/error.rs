use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("missing placeholder `{0}` for prompt template")]
    MissingPlaceholder(&'static str),

    #[error("transport error [{request_id}]: {message}")]
    Transport { request_id: String, message: String },

    #[error("authentication failed [{request_id}]: {message}")]
    Auth { request_id: String, message: String },

    #[error("HTTP {status} [{request_id}]: {message}")]
    HttpStatus {
        request_id: String,
        status: u16,
        message: String,
    },

    #[error("request timed out [{request_id}]")]
    Timeout { request_id: String },

    #[error("could not parse glance decision from {0:?}")]
    UnparseableDecision(String),

    #[error("could not parse answer letter from {0:?}")]
    UnparseableAnswer(String),

    #[error("could not parse confidence from {0:?}")]
    UnparseableConfidence(String),

    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("bad magic in feature file {0}")]
    BadMagic(PathBuf),

    #[error("truncated feature file {path}: expected {expected} bytes of rows, found {found}")]
    TruncatedFile {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("missing frame image for index {0}")]
    MissingFrame(usize),

    #[error("scripted provider has no rule for {0}")]
    NoScriptedRule(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Whether a retry of the same request may succeed.
    pub fn is_transient(&self) -> bool {
        matches!(self, Error::Transport { .. } | Error::Timeout { .. })
    }
}
