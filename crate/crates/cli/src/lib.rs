//! Batch harness around `tamperscope-core`: dataset indexes, detection runs,
//! scoring reports, corpus synthesis.

pub mod commands;
pub mod error;
pub mod fsio;
pub mod index;
pub mod report;

pub use error::{CliError, EXIT_INVALID, EXIT_PARTIAL};
