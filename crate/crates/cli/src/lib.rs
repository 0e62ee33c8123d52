//! Command-line tooling around the `nlop` reconstruction networks: cfl file
//! I/O, synthetic data, training, inference and image metrics.

pub mod bundle;
pub mod cfl;
pub mod error;
pub mod layout;
pub mod metrics;
pub mod reconet;
pub mod simulate;

pub use error::{CliError, Result};
