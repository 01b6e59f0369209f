//! Library side of the `dfq` command: manifests, per-layer pipelines and
//! the subcommands, callable without spawning the binary.

pub mod bits;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod output;
pub mod pipeline;

pub use error::{CliError, Result};
pub use pipeline::{DesignBank, DesignSettings, Method, ReportRow};
