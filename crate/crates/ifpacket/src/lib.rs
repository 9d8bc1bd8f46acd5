//! Command-line front end of `ifpacket-core`: config files, CSV and binary
//! outputs, and one subcommand per experiment.
pub mod commands;
pub mod input;
pub mod output;

pub use commands::{run, Cli, Command};
pub use output::{emit_report, Check, Report};
