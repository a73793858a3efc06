use std::fmt;
use std::path::Path;

use cml_core::Error;

/// An error tagged with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

pub const VALIDATION: i32 = 1;
pub const RUNTIME: i32 = 2;
pub const IO: i32 = 3;

impl Failure {
    pub fn validation(msg: impl fmt::Display) -> Self {
        Self {
            code: VALIDATION,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self {
            code: IO,
            error: anyhow::Error::new(err).context(format!("{}", path.display())),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::DegenerateOrbit(_) | Error::RetryExhausted { .. } => RUNTIME,
            _ => VALIDATION,
        };
        Self {
            code,
            error: err.into(),
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;
