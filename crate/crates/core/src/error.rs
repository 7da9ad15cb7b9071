use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("wrong magic number in {what}: expected {expected:#010x}, found {found:#010x}")]
    WrongMagic {
        what: &'static str,
        expected: u32,
        found: u32,
    },
    #[error("truncated payload in {what}: expected {expected} bytes, found {found}")]
    TruncatedPayload {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("truncated record: file length {len} is not a multiple of {record_len}")]
    TruncatedRecord { len: usize, record_len: usize },
    #[error("invalid label {label}: must be below {limit}")]
    InvalidLabel { label: usize, limit: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("need at least two classes, found {0}")]
    SingleClass(usize),
    #[error("insufficient samples: need {needed}, have {available}")]
    InsufficientSamples { needed: usize, available: usize },
    #[error("class {0} has no samples")]
    EmptyClass(u32),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("value outside box bounds at feature {feature}")]
    OutOfBounds { feature: usize },
    #[error("degenerate bandwidth: all bank rows identical")]
    DegenerateBandwidth,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("malformed model document: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
