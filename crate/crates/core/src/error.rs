use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{message} at offset {offset}")]
    Parse { offset: usize, message: String },
    #[error("no such table: {0}")]
    UnknownTable(String),
    #[error("no such column: {0}")]
    UnknownColumn(String),
    #[error("ambiguous column: {0}")]
    AmbiguousColumn(String),
    #[error("no such function: {0}")]
    UnknownFunction(String),
    #[error("misuse of aggregate: {0}")]
    AggregateMisuse(String),
    #[error("table {0} already exists")]
    DuplicateTable(String),
    #[error("index {0} already exists")]
    DuplicateIndex(String),
    #[error("duplicate column: {0}")]
    DuplicateColumn(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("{values} values for {columns} columns")]
    ArityMismatch { values: usize, columns: usize },
    #[error("result has {rows} rows, limit is {limit}")]
    ResponseTooLarge { rows: usize, limit: usize },
    #[error("{0}")]
    Protocol(String),
    #[error("{0}")]
    Internal(String),
}

impl Error {
    pub fn parse(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }

    /// The wire-protocol error code for this error.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } | Error::UnknownFunction(_) | Error::AggregateMisuse(_) => "PARSE",
            Error::UnknownTable(_) => "NOTABLE",
            Error::UnknownColumn(_) | Error::AmbiguousColumn(_) => "NOCOL",
            Error::DuplicateTable(_) | Error::DuplicateIndex(_) | Error::DuplicateColumn(_) => {
                "EXISTS"
            }
            Error::TypeMismatch(_) | Error::ArityMismatch { .. } => "TYPE",
            Error::ResponseTooLarge { .. } => "TOOBIG",
            Error::Protocol(_) => "PROTO",
            Error::Internal(_) => "INTERNAL",
        }
    }
}
