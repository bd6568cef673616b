use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: parse error at {locus}: {message}")]
    Parse {
        path: PathBuf,
        locus: String,
        message: String,
    },

    #[error("{path}: schema error at {locus}: {message}")]
    Schema {
        path: PathBuf,
        locus: String,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unknown domain `{0}`")]
    UnknownDomain(String),

    #[error("dialogue `{0}` has no system turn preceded by a user turn")]
    EmptyDialogue(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("empty input")]
    EmptyInput,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("vocabulary mismatch: model expects {expected}, instance was built with {found}")]
    VocabMismatch { expected: String, found: String },

    #[error("conditioning mode {0} needs latent codes but none were supplied")]
    MissingCodes(String),

    #[error("variant {0} needs stage-1 checkpoints but none were supplied")]
    MissingStage1(String),

    #[error("no sidecar vectors for utterance hash {0}")]
    PluginLookupMiss(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("bad checkpoint {path}: {message}")]
    BadCheckpoint { path: PathBuf, message: String },

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn bad_checkpoint(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::BadCheckpoint {
            path: path.into(),
            message: message.into(),
        }
    }
}
