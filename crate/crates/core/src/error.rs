use thiserror::Error;

/// Errors raised by the solver stack.
///
/// Each variant names the module-level failure it stands for so callers
/// (the CLI in particular) can map it to an exit status.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("conductivity on element {element} is not uniformly elliptic: eigenvalues ({min:.6e}, {max:.6e}) outside [{lower:.6e}, {upper:.6e}]")]
    Ellipticity {
        element: usize,
        min: f64,
        max: f64,
        lower: f64,
        upper: f64,
    },

    #[error("fiber condition violated on boundary element {element}: normal component {normal:.6e}, coupling {coupling:.3e}")]
    Fiber {
        element: usize,
        normal: f64,
        coupling: f64,
    },

    #[error("incompatible source: |integral| = {defect:.3e} exceeds tolerance {tolerance:.3e}")]
    Compatibility { defect: f64, tolerance: f64 },

    #[error("truncation level {requested} not available (maximum {available})")]
    Level { requested: usize, available: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("state left the certified ball at t = {time:.6e}: norm {norm:.6e} > radius {radius:.6e}")]
    BallExit { time: f64, norm: f64, radius: f64 },

    #[error("path outside the certificate scope: sup norm {norm:.6e} > r0 = {radius:.6e}")]
    CertificateScope { norm: f64, radius: f64 },

    #[error("certification failed: {0}")]
    Certification(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Shape { expected, actual })
    }
}
