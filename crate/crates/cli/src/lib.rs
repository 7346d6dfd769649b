//! Command-line front end: scenario loading and the five pipeline verbs.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_bound, cmd_certify, cmd_decompose, cmd_reproduce, cmd_simulate, Options, Report};
pub use config::{Scenario, ScenarioConfig};
pub use error::CliError;
