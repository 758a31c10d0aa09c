//! Scenario files, check orchestration and reports for the `strongcons`
//! command-line tool.

pub mod build;
pub mod demos;
pub mod emit;
pub mod error;
pub mod runner;
pub mod scenario;

pub use error::CliError;
pub use runner::{run, Report, RunOptions};
pub use scenario::{parse_scenario, parse_str, Scenario};
