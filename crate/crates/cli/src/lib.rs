//! File formats and experiment runners behind the `cgmot` command.

pub mod error;
pub mod experiments;
pub mod io;
pub mod noise;

pub use error::{CliError, CliResult};
