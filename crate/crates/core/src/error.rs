use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    InvalidInput(String),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row}, column `{column}`: {message}")]
    Cell {
        /// 1-based data row (the header is row 0).
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema: {0}")]
    Schema(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("no events observed; {0}")]
    NoEvents(&'static str),

    #[error("no comparable pairs for concordance")]
    NoComparablePairs,

    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),

    #[error("unknown measure `{0}`")]
    UnknownMeasure(String),

    #[error("dataset has no group column")]
    MissingGroup,

    #[error("group label `{0}` does not occur in the data")]
    UnknownGroup(String),

    #[error("expected exactly 2 groups in column `{column}`, found {found}")]
    GroupCount { column: String, found: usize },

    #[error("dataset too small: {0}")]
    TooSmall(String),

    #[error("degenerate data after {attempts} attempts: {last}")]
    Degenerate { attempts: usize, last: Box<Error> },

    #[error("feature width mismatch: model expects {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("serialization: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
