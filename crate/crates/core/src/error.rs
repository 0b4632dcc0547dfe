use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest schema error: missing required column `{0}`")]
    MissingColumn(String),

    #[error("manifest row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),

    #[error("audio decode error: {0}")]
    Decode(String),

    #[error("recording too short: {samples} samples, need at least {required}")]
    TooShort { samples: usize, required: usize },

    #[error("embedding format error: {0}")]
    EmbeddingFormat(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("feature `{0}` has no observed training values")]
    AllMissing(String),

    #[error("both classes are required: {0}")]
    SingleClass(String),

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("bootstrap produced only {valid} valid resamples (need at least 10)")]
    Bootstrap { valid: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("bundle schema version {found} is not supported (this build reads version {supported})")]
    SchemaVersion { found: u32, supported: u32 },

    #[error("bundle checksum mismatch: file is corrupt")]
    Checksum,

    #[error("bundle format error: {0}")]
    BundleFormat(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("timing harness is already running in this process")]
    TimingBusy,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
