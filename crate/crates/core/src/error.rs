use thiserror::Error;

use crate::spd::SpdMatrix;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("matrix is not positive definite (min eigenvalue {min_eig:e}, floor {floor:e})")]
    NotPositiveDefinite { min_eig: f64, floor: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty input")]
    EmptyInput,

    #[error("need at least two subjects, found {0}")]
    InsufficientSubjects(usize),

    #[error("format error at byte {offset}{}: {message}", record.map(|r| format!(" (record {r})")).unwrap_or_default())]
    Format {
        offset: u64,
        record: Option<usize>,
        message: String,
    },

    #[error("unknown subject {0}")]
    UnknownSubject(u32),

    #[error("training failed: {0}")]
    Training(String),

    #[error("Karcher mean did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    KarcherNotConverged {
        iterations: usize,
        grad_norm: f64,
        iterate: Box<SpdMatrix>,
    },

    #[error("zero-shot violation: {0}")]
    ZeroShotViolation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(offset: u64, record: Option<usize>, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            record,
            message: message.into(),
        }
    }
}
