//! Driver for the `fsde` binary: configuration, series ingestion and the
//! subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod series;

pub use commands::run;
pub use config::{CommandKind, RunConfig};
pub use error::{CliError, CliResult};
