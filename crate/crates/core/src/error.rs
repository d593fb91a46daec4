use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad input, bad configuration, or an argument outside an operation's contract.
    Usage,
    /// A numerical routine could not produce a usable answer.
    Numerical,
    /// File system or parse failure on an external document.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("column not found: {0}")]
    ColumnNotFound(String),
    #[error("non-numeric predictor column(s): {}", .0.join(", "))]
    NonNumericColumn(Vec<String>),
    #[error("too few rows: need at least {needed}, found {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("invalid synthetic specification: {0}")]
    InvalidSpec(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("Cholesky factorization failed after jitter {jitter:.3e} (condition estimate {condition:.3e})")]
    FactorizationFailure { jitter: f64, condition: f64 },
    #[error("non-finite objective at optimizer start {start}")]
    NonFiniteObjective { start: usize },
    #[error("predictive variance underflowed at the query point")]
    ZeroVariance,
    #[error("unsupported operation: {0}")]
    UnsupportedOperation(String),
    #[error("log target is not finite at the chain's initial point")]
    NonFiniteTarget,
    #[error("all importance weights are zero (max log-likelihood {max_log_likelihood})")]
    AllWeightsZero { max_log_likelihood: f64 },
    #[error("too few samples: need at least {needed}, found {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("too many slices: {slices} slices for {n} observations")]
    TooManySlices { slices: usize, n: usize },
    #[error("slice too small: {slices} slices over {n} observations leaves a slice with fewer than 2 points")]
    SliceTooSmall { slices: usize, n: usize },
    #[error("eigendecomposition failed: {0}")]
    EigenFailure(String),
    #[error("basis is singular under the given covariance")]
    SingularBasis,
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("response value at index {0} is zero")]
    ZeroResponse(usize),
    #[error("response value at index {0} is not strictly positive")]
    NonPositiveResponse(usize),
    #[error("insufficient data: need {needed} rows, dataset has {available}")]
    InsufficientData { needed: usize, available: usize },
    #[error("could not parse model document at byte {offset}: {message}")]
    ModelParse { offset: usize, message: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }

    /// The innermost error, skipping any context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// Context strings from outermost to innermost.
    pub fn context_chain(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut cur = self;
        while let Error::Context { context, source } = cur {
            out.push(context.clone());
            cur = source;
        }
        out
    }

    /// Variant name of the root error, stable enough for machine consumers.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            Error::FileNotFound(_) => "FileNotFound",
            Error::ColumnNotFound(_) => "ColumnNotFound",
            Error::NonNumericColumn(_) => "NonNumericColumn",
            Error::TooFewRows { .. } => "TooFewRows",
            Error::DegenerateData(_) => "DegenerateData",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::FactorizationFailure { .. } => "FactorizationFailure",
            Error::NonFiniteObjective { .. } => "NonFiniteObjective",
            Error::ZeroVariance => "ZeroVariance",
            Error::UnsupportedOperation(_) => "UnsupportedOperation",
            Error::NonFiniteTarget => "NonFiniteTarget",
            Error::AllWeightsZero { .. } => "AllWeightsZero",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::TooManySlices { .. } => "TooManySlices",
            Error::SliceTooSmall { .. } => "SliceTooSmall",
            Error::EigenFailure(_) => "EigenFailure",
            Error::SingularBasis => "SingularBasis",
            Error::RankDeficient => "RankDeficient",
            Error::ZeroResponse(_) => "ZeroResponse",
            Error::NonPositiveResponse(_) => "NonPositiveResponse",
            Error::InsufficientData { .. } => "InsufficientData",
            Error::ModelParse { .. } => "ModelParseError",
            Error::Csv(_) => "CsvError",
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
            Error::Context { .. } => unreachable!("root() strips context"),
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self.root() {
            Error::FileNotFound(_) | Error::Csv(_) | Error::Io(_) | Error::Json(_) | Error::ModelParse { .. } => {
                ErrorCategory::Io
            }
            Error::FactorizationFailure { .. }
            | Error::NonFiniteObjective { .. }
            | Error::ZeroVariance
            | Error::NonFiniteTarget
            | Error::AllWeightsZero { .. }
            | Error::EigenFailure(_)
            | Error::SingularBasis
            | Error::RankDeficient
            | Error::DegenerateData(_) => ErrorCategory::Numerical,
            _ => ErrorCategory::Usage,
        }
    }
}
