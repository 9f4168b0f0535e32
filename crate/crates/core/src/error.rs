use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("jet order mismatch: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },

    #[error("derivative order {0} exceeds the supported maximum of {max}", max = crate::jet::MAX_ORDER)]
    OrderTooHigh(usize),

    #[error("division by near-zero denominator {value:e}")]
    DivisionByZero { value: f64 },

    /// A rational activation was evaluated within the denominator floor of a pole.
    #[error("rational activation pole: denominator {value:e} at row {row}")]
    Pole { value: f64, row: usize },

    #[error("node does not belong to this tape")]
    DanglingNode,

    #[error("tape output must be a single scalar, got {rows}x{cols}")]
    NotScalar { rows: usize, cols: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("rational fit did not converge: {0}")]
    FitFailure(String),

    #[error("training aborted at epoch {epoch}: {source}")]
    TrainingAborted {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("library column {index} ({name}) has zero norm")]
    ZeroColumn { index: usize, name: String },

    #[error("solver unstable: {0}")]
    Instability(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("size mismatch in {path}: expected {expected} bytes, found {found}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// True for errors caused by user input rather than runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
