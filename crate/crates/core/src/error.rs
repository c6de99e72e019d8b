use std::path::PathBuf;

use thiserror::Error;

/// Every failure the toolkit can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("unsupported NIfTI datatype code {0} (supported: 2 uint8, 4 int16, 16 float32)")]
    UnsupportedDatatype(i16),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("duplicate embedding item (subject {subject_id}, slice {slice_index}, modality {modality})")]
    DuplicateItem {
        subject_id: String,
        slice_index: usize,
        modality: String,
    },

    #[error("degenerate vector: {0}")]
    DegenerateVector(String),

    #[error("degenerate intensity: input is constant at {0}")]
    DegenerateIntensity(f64),

    #[error("dice is undefined: both masks are empty")]
    UndefinedDice,

    #[error("accuracy is undefined: no samples")]
    UndefinedAccuracy,

    #[error("anchor {anchor} has no positive")]
    NoPositive { anchor: String },

    #[error("batch too small: {0} item(s), need at least 2")]
    BatchTooSmall(usize),

    #[error("no prototype for modality {0}")]
    MissingPrototype(String),

    #[error("unpaired volumes: {}", .orphans.join(", "))]
    Pairing { orphans: Vec<String> },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    /// Process exit code for this error: 2 for invariant violations, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invariant(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
