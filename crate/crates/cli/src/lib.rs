//! Experiment harness around `sas-core`: run configs, the `bench`, `retrieve`,
//! `self-improve` and `report` commands, and artifact directories.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod profiles;
pub mod svg;

pub use commands::{report, run, Outcome, ReportOutcome, RunOptions};
pub use config::{AgentKind, Command, RunConfig};
