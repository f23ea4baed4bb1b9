//! Command-line front end for `focusim-core`: JSON run configuration,
//! parallel execution and deterministic CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
mod error;
pub mod exec;
pub mod fixtures;
pub mod output;

pub use commands::{run, Command};
pub use config::{parse_config, parse_config_str, Overrides, Resolved, RunConfig};
pub use error::CliError;
pub use exec::RayonExecutor;
