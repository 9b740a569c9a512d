use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("embedding norm {norm:e} is at or below the normalization floor")]
    ZeroNormEmbedding { norm: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("embedding contains a non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("misalignment kind mismatch: expected {expected}, got {actual}")]
    KindMismatch {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("sample has no detected objects and the empty-object policy is skip_sample")]
    EmptyObjectSet,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("batch is empty")]
    EmptyBatch,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("training loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("dataset contains a single class ({0}); training needs both real and fake samples")]
    SingleClassDataset(&'static str),

    #[error("input is empty")]
    EmptyInput,

    #[error("no positive (fake) samples")]
    NoPositives,

    #[error("invalid sigma {0}; must be > 0 and finite")]
    InvalidSigma(f64),

    #[error("invalid JPEG quality {0}; must be in [1, 100]")]
    InvalidQuality(i64),

    #[error("image encode failed: {0}")]
    EncodeError(String),

    #[error("image decode failed: {0}")]
    ImageDecode(String),

    #[error("remote provider returned HTTP {status}: {body}")]
    Remote { status: u16, body: String },

    #[error("remote request timed out: {0}")]
    Timeout(String),

    #[error("remote transport error: {0}")]
    Transport(String),

    #[error("provider protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate sample id {id:?} at line {line}")]
    DuplicateId { id: String, line: usize },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("no records to export")]
    EmptyExport,

    #[error("all {0} samples failed featurization")]
    AllSamplesFailed(usize),

    #[error("sample {id}: {source}")]
    Sample {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Broad classification used by the command-line front end for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Usage,
    Data,
    Provider,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn for_sample(id: &str, source: Error) -> Self {
        Error::Sample {
            id: id.to_string(),
            source: Box::new(source),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidConfig(_) | Error::InvalidSigma(_) | Error::InvalidQuality(_) => ErrorClass::Usage,
            Error::Remote { .. }
            | Error::Timeout(_)
            | Error::Transport(_)
            | Error::ProtocolViolation(_)
            | Error::ImageDecode(_)
            | Error::MissingArtifact(_) => ErrorClass::Provider,
            Error::Sample { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }
}
