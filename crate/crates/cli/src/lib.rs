//! Command-line plumbing around the `metrack` tracker: frame and
//! ground-truth I/O, synthetic sequences, tracking runs and reports.

pub mod config;
pub mod error;
pub mod io;
pub mod run;
pub mod synth;

pub use error::{CliError, Result};
