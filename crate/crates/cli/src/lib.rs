//! File formats and subcommands behind the `tdvv` binary.

pub mod commands;
pub mod error;
pub mod report;
pub mod wav;

pub use error::{CliError, CliResult};
