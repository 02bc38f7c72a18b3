use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed dataset: {0}")]
    MalformedDataset(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("zero-norm embedding for `{0}`")]
    ZeroNorm(String),
    #[error("no embedding for item `{0}`")]
    MissingEmbedding(String),
    #[error("unknown id `{0}`")]
    UnknownId(String),
    #[error("index {index} out of range for {len} items")]
    OutOfRange { index: usize, len: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("image {width}x{height} is smaller than 8x8")]
    ImageTooSmall { width: usize, height: usize },
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated data: {0}")]
    Truncated(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("invalid neighbor cache: {0}")]
    InvalidCache(String),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    /// Whether the failure is attributable to the caller's input rather than
    /// to an internal fault.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}
