//! Error types shared across the library.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    #[error("schema error: required column '{column}' is not mapped to any header in the input")]
    MissingColumn { column: String },

    #[error("empty data: {context}")]
    EmptyData { context: String },

    #[error("unknown column '{column}'")]
    UnknownColumn { column: String },

    #[error("column '{column}' is a synthetic truth column and cannot be used as an estimator input")]
    TruthColumnLeak { column: String },

    #[error("invalid argument: {message}")]
    InvalidArgument { message: String },

    #[error("degenerate bandwidth at fitting point ({r}, {h}): 30th-percentile distance is zero")]
    DegenerateBandwidth { r: f64, h: f64 },

    #[error("rank-deficient local system at fitting point ({r}, {h}): condition estimate {cond:.3e}")]
    RankDeficient { r: f64, h: f64, cond: f64 },

    #[error("quantile fit did not converge within {max_iter} iterations (last objective decrease {last_decrease:.3e})")]
    NonConvergence { max_iter: usize, last_decrease: f64 },

    #[error("learner rank error: {message}")]
    LearnerRank { message: String },

    #[error("feature mismatch: expected column '{expected}' at position {position}, got '{actual}'")]
    FeatureMismatch {
        expected: String,
        actual: String,
        position: usize,
    },

    #[error("no treatment variation: sum of squared treatment residuals {tt:.3e} is below 1e-12")]
    NoTreatmentVariation { tt: f64 },

    #[error("fold {fold} failed: {source}")]
    FoldFailure {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("insufficient rows: need at least {needed}, have {got} ({context})")]
    InsufficientRows {
        needed: usize,
        got: usize,
        context: String,
    },
}

impl Error {
    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument {
            message: message.into(),
        }
    }
}
