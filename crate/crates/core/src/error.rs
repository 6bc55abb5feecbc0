use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ShapeError {
    #[error("grid dimensions must be positive")]
    ZeroDim,
    #[error("data length {found} does not match shape (expected {expected})")]
    Length { expected: usize, found: usize },
    #[error("{what}: expected {expected}, found {found}")]
    Mismatch {
        what: &'static str,
        expected: String,
        found: String,
    },
}

/// Input validation failures for the numeric operations.
#[derive(Debug, Error, PartialEq)]
pub enum ValidationError {
    #[error("length mismatch: {what} has {found} entries, expected {expected}")]
    Length {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{name} = {value} is outside [{min}, {max}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("{0} contains a non-finite value")]
    NonFinite(&'static str),
    #[error("{0} has zero norm")]
    ZeroNorm(&'static str),
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// Decoding failures for the CPT1 container.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic: expected \"CPT1\", found {found:?}")]
    BadMagic { found: Vec<u8> },
    #[error("truncated header: {field} needs {needed} bytes, {available} available")]
    TruncatedHeader {
        field: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),
    #[error("ndim must be at least 1")]
    EmptyShape,
    #[error("dimension {index} is zero")]
    ZeroDim { index: usize },
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("trailing bytes after payload: expected {expected} bytes, found {found}")]
    TrailingBytes { expected: usize, found: usize },
    #[error("dtype mismatch: expected {expected}, found {found}")]
    DtypeMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("too many dimensions ({0}, max 255)")]
    TooManyDims(usize),
    #[error("dimension {index} = {value} does not fit in u32")]
    DimOverflow { index: usize, value: usize },
    #[error("bitmap value {value} at offset {offset} is not 0 or 1")]
    NotBinary { offset: usize, value: u8 },
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

#[derive(Debug, Error)]
pub enum TensorIoError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("manifest {}: {source}", path.display())]
    ManifestIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {}: {source}", path.display())]
    ManifestParse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported fixture version {found:?} (expected {expected:?})")]
    Version { expected: &'static str, found: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("projection params: {0}")]
    Params(String),
    #[error("sample {sample_id}: missing file {}", path.display())]
    MissingFile { sample_id: String, path: PathBuf },
    #[error("sample {sample_id}: {source}")]
    Tensor {
        sample_id: String,
        #[source]
        source: TensorIoError,
    },
    #[error("sample {sample_id}: {message}")]
    Invariant { sample_id: String, message: String },
    #[error("unknown sample {0:?}")]
    UnknownSample(String),
    #[error("exit layer {layer} is not available (fixture has {available:?})")]
    UnknownLayer { layer: u32, available: Vec<u32> },
}

impl FixtureError {
    pub(crate) fn invariant(sample_id: &str, message: impl Into<String>) -> Self {
        FixtureError::Invariant {
            sample_id: sample_id.to_string(),
            message: message.into(),
        }
    }
}

/// Errors surfaced by the end-to-end pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Fixture(#[from] FixtureError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    TensorIo(#[from] TensorIoError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
