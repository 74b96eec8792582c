//! Configuration loading and subcommands of the `stochctl` tool.

pub mod config;
pub mod error;
pub mod polyparse;
pub mod run;

pub use config::RunConfig;
pub use error::CliError;
