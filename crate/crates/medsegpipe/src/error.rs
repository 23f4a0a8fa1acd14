//! Error type shared by every pipeline stage.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // --- NIfTI / sample I/O ---
    #[error("bad NIfTI magic: {0:?}")]
    BadMagic([u8; 4]),
    #[error("invalid NIfTI header: {0}")]
    InvalidHeader(String),
    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("truncated voxel data: expected {expected} bytes, got {actual}")]
    TruncatedData { expected: usize, actual: usize },
    #[error("non-finite voxel value at flat index {0}")]
    NonFiniteVoxel(usize),
    #[error("label map has {0} classes, uint8 output supports at most 256")]
    TooManyClasses(usize),
    #[error("sample not found: {0}")]
    SampleNotFound(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    // --- preprocessing ---
    #[error("invalid range: lo {lo} must be < hi {hi}")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("invalid voxel spacing: {0}")]
    InvalidSpacing(String),

    // --- patching ---
    #[error("invalid patch spec: {0}")]
    InvalidPatchSpec(String),
    #[error("grid shape mismatch: grid built for {grid:?}, volume is {volume:?}")]
    GridShapeMismatch {
        grid: Vec<usize>,
        volume: Vec<usize>,
    },
    #[error("patch count mismatch: grid has {expected} origins, got {actual} patches")]
    PatchCountMismatch { expected: usize, actual: usize },
    #[error("operation requires a 3D volume, got rank {0}")]
    NotThreeDimensional(usize),

    // --- batching ---
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("corrupt batch cache: {0}")]
    CorruptCache(String),
    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),

    // --- model ---
    #[error("non-finite loss at {0}; training aborted")]
    NonFiniteLoss(String),
    #[error("corrupt model file: {0}")]
    CorruptModel(String),
    #[error("model weights were never initialized")]
    UntrainedModel,

    // --- evaluation ---
    #[error("invalid k={k} for {n} samples (need 2 <= k <= n)")]
    InvalidK { k: usize, n: usize },
    #[error("too few samples: {0}")]
    TooFewSamples(usize),
    #[error("invalid test fraction {0} (need 0 < f < 1)")]
    InvalidFraction(f64),
    #[error("train and test sets overlap on id {0:?}")]
    OverlappingSets(String),
    #[error("unknown sample id {0:?}")]
    UnknownId(String),

    #[error("fold {index} failed: {source}")]
    FoldFailed { index: usize, source: Box<Error> },

    // --- configuration ---
    #[error("config parse error at line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("config validation error for {field}: {reason}")]
    ValidationError { field: String, reason: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
}
