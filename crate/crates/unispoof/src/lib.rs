//! File formats, run directories and the command-line interface around
//! `unispoof-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod imageio;
pub mod report;
pub mod scores;
pub mod threads;

pub use error::{CliError, Result};
