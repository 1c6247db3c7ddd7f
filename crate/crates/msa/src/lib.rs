//! Command-line front end of `msa-core`: configuration, problem spec files,
//! and the CSV traces of the `run`, `oracle` and `rate` subcommands.
//!
//! Exit codes: 0 on success, 2 for configuration errors (including an
//! unwritable output path or an exceeded oracle budget), 3 for numerical
//! failures.

pub mod commands;
pub mod config;
pub mod problems;
pub mod trace;

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) | CliError::Numerical(msg) => f.write_str(msg),
        }
    }
}

impl std::error::Error for CliError {}

impl From<msa_core::Error> for CliError {
    fn from(e: msa_core::Error) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}
