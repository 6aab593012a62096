//! Front end for the `pinbridge` binary: configuration, command execution,
//! serialization and the acceptance suite.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod reproduce;

pub use commands::{execute, list_families, Artifacts};
pub use config::{parse_family, CommandKind, RunConfig};
pub use error::CliError;
