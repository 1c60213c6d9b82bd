use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,

    #[error("symbol {symbol} outside alphabet of size {alphabet}")]
    SymbolOutOfAlphabet { symbol: usize, alphabet: usize },

    #[error("pmf has no positive mass")]
    ZeroPmf,

    #[error("truncated stream: needed byte {needed}, have {available}")]
    TruncatedStream { needed: usize, available: usize },

    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("unsupported version {found}, expected {expected}")]
    VersionMismatch { found: u8, expected: u8 },

    #[error("length overrun: {what} needs {needed} bytes, {available} remain")]
    LengthOverrun {
        what: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("malformed image header: {0}")]
    MalformedHeader(String),

    #[error("image payload truncated: expected {expected} bytes, got {got}")]
    PayloadTruncated { expected: usize, got: usize },

    #[error("rd curve: {0}")]
    Curve(String),

    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
