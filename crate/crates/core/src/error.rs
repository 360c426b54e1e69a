use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty grid")]
    EmptyGrid,

    #[error("cannot interpolate: need at least two strictly increasing records")]
    CannotInterpolate,

    #[error("unclean dataset: {0}")]
    UncleanDataset(String),

    #[error("schema mismatch: expected {expected:?}, found {found:?}")]
    SchemaMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid resolution: {0}")]
    GridResolution(String),

    #[error("window too small: {have} samples, need at least {need}")]
    WindowTooSmall { have: usize, need: usize },

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("formula valid for interior solutions only")]
    NotInterior,

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("unknown config key `{0}`")]
    UnknownConfigKey(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("cannot {op} {path}: {source}")]
    Io {
        op: &'static str,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Failure while reading an input the user pointed us at.
    pub fn read(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            op: "read",
            path: path.into(),
            source,
        }
    }

    pub fn write(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            op: "write",
            path: path.into(),
            source,
        }
    }

    pub fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    /// Wrap an error with the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Whether the error was caused by bad user input (exit code 1) rather
    /// than an internal or environment failure (exit code 2).
    pub fn is_user_error(&self) -> bool {
        match self {
            Error::Io { op, .. } => *op == "read",
            Error::Diverged { .. } => false,
            Error::Stage { source, .. } => source.is_user_error(),
            Error::Csv(e) => !matches!(e.kind(), csv::ErrorKind::Io(_)),
            _ => true,
        }
    }
}
