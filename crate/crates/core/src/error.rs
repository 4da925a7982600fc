use alloc::string::String;

/// Errors raised by the imputation core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("column {column} has zero variance over its observed entries")]
    ZeroVariance { column: usize },
    #[error("column {column} has {observed} observed entries, need at least {required}")]
    TooFewObserved {
        column: usize,
        observed: usize,
        required: usize,
    },
    #[error("column {column} is entirely missing")]
    FullyMissingColumn { column: usize },
    #[error("column index {column} out of range for {columns} columns")]
    ColumnOutOfRange { column: usize, columns: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("column {column} already contains missing cells")]
    AlreadyMissing { column: usize },
    #[error("intercept calibration failed for column {column}")]
    CalibrationFailed { column: usize },
    #[error("every row was dropped by the missingness filter")]
    AllRowsDropped,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("series of length {len} is too short (need {required})")]
    SeriesTooShort { len: usize, required: usize },
    #[error("no donor row has column {column} observed")]
    NoDonor { column: usize },
    #[error("sampler stalled: {consecutive} consecutive rejections")]
    SamplerStalled { consecutive: usize },
    #[error("sampler failed on column {column}, sweep {sweep}: {source}")]
    SamplerContext {
        column: usize,
        sweep: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
    #[error("insufficient samples: have {have}, need {need}")]
    InsufficientSamples { have: usize, need: usize },
    #[error("vectors must be non-empty")]
    Empty,
    #[error("metric undefined: {0}")]
    DegenerateMetric(&'static str),
    #[error("reports have inconsistent shapes")]
    InconsistentReports,
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
