use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value {value} outside score range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("degenerate quantizer: {levels} levels requested but only {distinct} distinct scores")]
    DegenerateQuantizer { levels: usize, distinct: usize },

    #[error("singular reverse-map fit (normal equations are rank deficient); use ridge > 0")]
    SingularFit,

    #[error("divergent loss: prediction is zero at index {index} where the target is positive")]
    DivergentLoss { index: usize },

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure in {0}")]
    NumericalFailure(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("malformed record at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("item {index}: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("epoch {epoch}, batch {batch}: {source}")]
    Training {
        epoch: usize,
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("repetition {repetition}: {source}")]
    Repetition {
        repetition: usize,
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

    pub(crate) fn at(index: usize, source: Error) -> Self {
        Error::AtIndex {
            index,
            source: Box::new(source),
        }
    }

    /// Innermost error once index/epoch/repetition context is peeled away.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtIndex { source, .. }
            | Error::Training { source, .. }
            | Error::Repetition { source, .. } => source.root(),
            other => other,
        }
    }

    /// True when the failure is numerical (NaN/Inf) rather than a data or usage problem.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::NumericalFailure(_) | Error::DivergentLoss { .. } | Error::SingularFit
        )
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
