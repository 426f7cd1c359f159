use lomap_core::Error;
use std::fmt;

/// Command failure, mapped onto the process exit code.
#[derive(Debug)]
pub enum Failure {
    Param(String),
    Data(String),
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Failure>;

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Param(_) => 2,
            Failure::Data(_) => 3,
            Failure::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Param(m) => write!(f, "parameter error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Numeric(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Parameter(_) | Error::Config(_) | Error::Validation(_) => Failure::Param(msg),
            Error::Shape { .. } | Error::Format(_) | Error::Io(_) => Failure::Data(msg),
            Error::Numerical(_) | Error::Degenerate(_) => Failure::Numeric(msg),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Data(e.to_string())
    }
}
