use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed or inconsistent input.
    Validation,
    /// A computation that cannot produce a defined value.
    Numerical,
    /// The filesystem failed underneath us.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // array files
    #[error("not an array file: bad magic string")]
    BadMagic,
    #[error("unsupported array format version {0}.{1}")]
    UnsupportedVersion(u8, u8),
    #[error("malformed array header: {0}")]
    MalformedHeader(String),
    #[error("unsupported dtype {0:?}: only little-endian float32/float64 are accepted")]
    UnsupportedDtype(String),
    #[error("unsupported layout: {0}")]
    UnsupportedLayout(String),
    #[error("array payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("non-finite value at flat index {index}")]
    NonFiniteValue { index: usize },

    // manifests
    #[error("manifest parse error: {0}")]
    Parse(String),
    #[error("referenced file is missing: {0}")]
    MissingFile(PathBuf),
    #[error("checkpoints disagree on layer set: epoch {epoch} has {found:?}, expected {expected:?}")]
    InconsistentLayers {
        epoch: u64,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("epochs must be strictly increasing: {previous} followed by {next}")]
    NonMonotoneEpochs { previous: u64, next: u64 },
    #[error("invalid feature matrix: {0}")]
    InvalidFeatures(String),
    #[error("invalid predictions: {0}")]
    InvalidPredictions(String),

    // pooling
    #[error("pooling requires raw token features, got {0}")]
    WrongPooling(String),
    #[error("pooling requires at least 2 tokens, got {0}")]
    TooFewTokens(usize),

    // similarity
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("sample ids differ between representations")]
    SampleMismatch,
    #[error("zero variance: similarity is undefined for a constant representation")]
    ZeroVariance,
    #[error("numerical inconsistency: {0}")]
    NumericalInconsistency(String),

    // calibration
    #[error("empty input")]
    EmptyInput,
    #[error("non-finite logit at row {row}")]
    NonFiniteLogits { row: usize },

    // knn
    #[error("dimension mismatch: gallery has d={gallery}, query has d={query}")]
    DimensionMismatch { gallery: usize, query: usize },
    #[error("k={k} exceeds gallery size {gallery}")]
    KTooLarge { k: usize, gallery: usize },

    // simspace
    #[error("layer {0:?} is missing")]
    LayerMissing(String),
    #[error("loss-based divergence requested but a snapshot carries no loss")]
    MissingLoss,
    #[error("snapshot {0:?} carries no predictions")]
    MissingPredictions(String),

    // trajectory
    #[error("no records")]
    EmptyRecords,
    #[error("duplicate record for run {run_id:?}, epoch {epoch}, layer {layer_id:?}")]
    DuplicateRecord {
        run_id: String,
        epoch: u64,
        layer_id: String,
    },

    // correlate
    #[error("interval width must lie in (0, 1], got {0}")]
    BadWidth(f64),
    #[error("x values have zero variance")]
    DegenerateX,
    #[error("y values have zero variance: correlation is undefined")]
    DegenerateY,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("epoch {epoch}: {source}")]
    AtEpoch {
        epoch: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::DegenerateInput(_)
            | Error::ZeroVariance
            | Error::NumericalInconsistency(_)
            | Error::DegenerateX
            | Error::DegenerateY => ErrorClass::Numerical,
            Error::AtEpoch { source, .. } => source.class(),
            _ => ErrorClass::Validation,
        }
    }

    /// Stable variant name, used in machine-readable error output.
    pub fn name(&self) -> &'static str {
        match self {
            Error::Io { .. } => "Io",
            Error::BadMagic => "BadMagic",
            Error::UnsupportedVersion(..) => "UnsupportedVersion",
            Error::MalformedHeader(_) => "MalformedHeader",
            Error::UnsupportedDtype(_) => "UnsupportedDtype",
            Error::UnsupportedLayout(_) => "UnsupportedLayout",
            Error::Truncated { .. } => "Truncated",
            Error::NonFiniteValue { .. } => "NonFiniteValue",
            Error::Parse(_) => "ParseError",
            Error::MissingFile(_) => "MissingFile",
            Error::InconsistentLayers { .. } => "InconsistentLayers",
            Error::NonMonotoneEpochs { .. } => "NonMonotoneEpochs",
            Error::InvalidFeatures(_) => "InvalidFeatures",
            Error::InvalidPredictions(_) => "InvalidPredictions",
            Error::WrongPooling(_) => "WrongPooling",
            Error::TooFewTokens(_) => "TooFewTokens",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::DegenerateInput(_) => "DegenerateInput",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::SampleMismatch => "SampleMismatch",
            Error::ZeroVariance => "ZeroVariance",
            Error::NumericalInconsistency(_) => "NumericalInconsistency",
            Error::EmptyInput => "EmptyInput",
            Error::NonFiniteLogits { .. } => "NonFiniteLogits",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::KTooLarge { .. } => "KTooLarge",
            Error::LayerMissing(_) => "LayerMissing",
            Error::MissingLoss => "MissingLoss",
            Error::MissingPredictions(_) => "MissingPredictions",
            Error::EmptyRecords => "EmptyRecords",
            Error::DuplicateRecord { .. } => "DuplicateRecord",
            Error::BadWidth(_) => "BadWidth",
            Error::DegenerateX => "DegenerateX",
            Error::DegenerateY => "DegenerateY",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::AtEpoch { source, .. } => source.name(),
        }
    }

    pub(crate) fn at_epoch(self, epoch: u64) -> Self {
        Error::AtEpoch {
            epoch,
            source: Box::new(self),
        }
    }
}
