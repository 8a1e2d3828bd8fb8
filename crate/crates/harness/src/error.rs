use std::fmt;

use bidomain_core::Error;

/// Failure of a harness run, mapped onto the process exit status.
#[derive(Debug)]
pub enum HarnessError {
    /// Invalid configuration or arguments (exit 2).
    Config(String),
    /// A solver module rejected its input (exit 2) or failed numerically or
    /// on a certificate (exit 1).
    Module { module: &'static str, source: Error },
    /// A run finished but its numerical outcome is a failure (exit 1).
    Failed(String),
    /// Writing results failed (exit 1).
    Io(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Module { source, .. } => match source {
                Error::Config(_)
                | Error::Ellipticity { .. }
                | Error::Fiber { .. }
                | Error::Compatibility { .. }
                | Error::Level { .. }
                | Error::Parameter(_) => 2,
                Error::Shape { .. }
                | Error::Numerical(_)
                | Error::BallExit { .. }
                | Error::CertificateScope { .. }
                | Error::Certification(_) => 1,
            },
            HarnessError::Failed(_) | HarnessError::Io(_) => 1,
        }
    }
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Config(msg) => write!(f, "configuration error: {msg}"),
            HarnessError::Module { module, source } => write!(f, "{module}: {source}"),
            HarnessError::Failed(msg) => write!(f, "{msg}"),
            HarnessError::Io(msg) => write!(f, "i/o error: {msg}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

/// Tag core errors with the module that raised them.
pub trait InModule<T> {
    fn in_module(self, module: &'static str) -> Result<T, HarnessError>;
}

impl<T> InModule<T> for bidomain_core::Result<T> {
    fn in_module(self, module: &'static str) -> Result<T, HarnessError> {
        self.map_err(|source| HarnessError::Module { module, source })
    }
}
