pub mod domain;
pub mod error;
pub mod exec;
pub mod galerkin;
pub mod ionic;
pub mod operator;
pub mod periodic;
pub mod spectral;

pub use error::{Error, Result};
pub use exec::Execution;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
