use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure modes of the raw tensor container.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RawFormatError {
    #[error("bad magic bytes {0:?}, expected \"UTSR\"")]
    BadMagic([u8; 4]),
    #[error("rank must be at least 1")]
    ZeroRank,
    #[error("extents {0:?} overflow the addressable element count")]
    ExtentOverflow(Vec<u64>),
    #[error("short read: needed {needed} bytes, found {found}")]
    ShortRead { needed: usize, found: usize },
    #[error("{0} trailing bytes after tensor data")]
    TrailingBytes(usize),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{axis} {size} is not divisible by {divisor}")]
    Dimension {
        axis: &'static str,
        size: usize,
        divisor: usize,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("label {label} out of range for {categories} categories")]
    LabelOutOfRange { label: u8, categories: usize },
    #[error("no valid (non-ignore) pixels")]
    NoValidPixels,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("missing forward cache: {0}")]
    MissingCache(&'static str),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: decode error: {msg}", path.display())]
    Decode { path: PathBuf, msg: String },
    #[error("{}: unsupported PNG format: {msg}", path.display())]
    Unsupported { path: PathBuf, msg: String },
    #[error("{}: {source}", path.display())]
    RawFormat {
        path: PathBuf,
        #[source]
        source: RawFormatError,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Stable snake_case tag for machine-readable diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::Shape(_) => "shape",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::LabelOutOfRange { .. } => "label_out_of_range",
            Error::NoValidPixels => "no_valid_pixels",
            Error::Empty(_) => "empty",
            Error::MissingCache(_) => "missing_cache",
            Error::Io { .. } => "io",
            Error::Decode { .. } => "decode",
            Error::Unsupported { .. } => "unsupported",
            Error::RawFormat { .. } => "raw_format",
        }
    }
}
