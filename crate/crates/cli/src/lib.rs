//! The `fqt` command-line tool: parameter planning, federated training runs,
//! weight generation from checkpoints and classical inference.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod metrics;

pub use commands::{Cli, Command, Failure};
pub use config::RunConfig;
