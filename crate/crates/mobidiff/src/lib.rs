//! File formats, configuration and the command-line pipeline around
//! `mobidiff-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod pipeline;

pub use error::{CliError, Result};
