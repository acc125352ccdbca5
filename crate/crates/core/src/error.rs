//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {reason}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{0}: file contains no series")]
    EmptyFile(PathBuf),

    #[error("{path}:{line}: non-finite value")]
    NonFiniteValue { path: PathBuf, line: usize },

    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("input length {0} is too short for any kernel length")]
    InputTooShort(usize),

    #[error("kernel span {span} exceeds unpadded input length {input_len}")]
    KernelTooLargeForInput { span: usize, input_len: usize },

    #[error("convolution failed for sample {sample}, kernel {kernel}: {source}")]
    Transform {
        sample: usize,
        kernel: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("PPV of an empty feature map is undefined")]
    EmptyFeature,

    #[error("width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("training labels contain a single class")]
    DegenerateLabels,

    #[error("singular linear system in ridge solve")]
    SingularSystem,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("pool size {0} must be even and at least 4")]
    BadPoolSize(usize),

    #[error("pool of {0} states is too small for mutation")]
    PoolTooSmall(usize),

    #[error("density {0} must lie in (0, 1]")]
    BadDensity(f64),

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("config field `{field}`: {reason}")]
    TypeError { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
