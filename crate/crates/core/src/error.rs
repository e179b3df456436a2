use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("empty panel: {0}")]
    EmptyPanel(String),

    #[error("firm {firm}: insufficient data ({observed} observations, need {required})")]
    InsufficientData {
        firm: String,
        observed: usize,
        required: usize,
    },

    #[error("firm {firm}: degenerate series (zero leave-one-out variance at column {column})")]
    DegenerateSeries { firm: String, column: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("undefined mean: {0}")]
    UndefinedMean(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("alpha calibration failed: {reason}")]
    Calibration {
        reason: String,
        probes: Vec<crate::pipeline::Probe>,
    },

    #[error("reconstruction incomplete: {reason}")]
    PartialResult {
        reason: String,
        partial: Box<crate::pipeline::PartialReconstruction>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Data,
    Numerical,
    Partial,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Numerical(_) | Error::Calibration { .. } => ErrorKind::Numerical,
            Error::PartialResult { .. } => ErrorKind::Partial,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
