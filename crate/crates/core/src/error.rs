use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot read dataset {path}: {source}")]
    DatasetFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed csv: {0}")]
    Csv(String),

    #[error("target column `{0}` not found in header")]
    MissingTargetColumn(String),

    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a finite number")]
    UnparseableCell { row: usize, column: String, value: String },

    #[error("row {row}, column `{column}`: missing value")]
    MissingValue { row: usize, column: String },

    #[error("dataset has no usable rows")]
    NoRows,

    #[error("need at least {needed} rows, found {found}")]
    TooFewRows { needed: usize, found: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("model used before fitting")]
    NotFitted,

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("all candidates failed: {0}")]
    AllCandidatesFailed(String),

    #[error("invalid plan: {0}")]
    Plan(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for errors caused by the input data rather than the plan or the computation.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::DatasetFile { .. }
                | Error::Csv(_)
                | Error::MissingTargetColumn(_)
                | Error::DuplicateColumn(_)
                | Error::UnparseableCell { .. }
                | Error::MissingValue { .. }
                | Error::NoRows
        )
    }
}
