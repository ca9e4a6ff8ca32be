use thiserror::Error;

/// Failure classes. Each maps onto a stable CLI exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("constraint violated: {0}")]
    Constraint(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{path}: line {line}: {msg}")]
    Data { path: String, line: u64, msg: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn constraint(msg: impl Into<String>) -> Self {
        Error::Constraint(msg.into())
    }

    /// 2 input, 3 constraint, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) | Error::Data { .. } | Error::Io(_) => 2,
            Error::Constraint(_) => 3,
            Error::Numerical(_) => 4,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
