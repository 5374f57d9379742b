//! Command-line harness for the synthetic GAN benchmark: dataset files,
//! checkpoints, run directories, evaluation reports and plots on top of
//! `ganbench-core`.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod history;
pub mod plots;
pub mod run;

pub use error::{CliError, CliResult};
