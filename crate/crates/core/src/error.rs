use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("truncated data: expected {expected} bytes, found {found}")]
    TruncatedData { expected: usize, found: usize },

    #[error("unsupported maxval {0}")]
    UnsupportedMaxval(u32),

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("pose unavailable: carpopodium keypoint missing")]
    PoseUnavailable,

    #[error("degenerate pose: body and carpopodium coincide")]
    DegeneratePose,

    #[error("missing depth: {0}")]
    MissingDepth(String),

    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    #[error("unpaired ids: {0:?}")]
    UnpairedIds(Vec<i64>),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
