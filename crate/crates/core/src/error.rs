use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no rows")]
    NoRows,

    #[error("dataset needs at least {required} columns, found {found}")]
    TooFewColumns { required: usize, found: usize },

    #[error("no usable companion column for column {column}")]
    NoUsableCompanion { column: usize },

    #[error("label {label:?} is not a level of column {column:?}")]
    UnseenLabel { column: String, label: String },

    #[error("non-finite value {value} in {context}")]
    NonFinite { value: f64, context: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Imputed table disagrees with the masked table on observed cells.
    #[error("imputed data disagrees with observed data in {} cell(s), first: {:?}", .cells.len(), .cells.first())]
    ObservedMismatch { cells: Vec<(usize, usize)> },

    #[error("no scorable variables")]
    NoScorableVariables,

    #[error("imputation failed: {0}")]
    Imputation(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    ///
    /// 2 marks an input contract violation, 3 means nothing could be scored
    /// and 4 is an internal numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NoScorableVariables => 3,
            Error::Numeric(_) | Error::NonFinite { .. } => 4,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}
