//! Config-driven experiment runner behind the `stocon` binary.

pub mod config;
pub mod runner;

pub use config::{parse_config, Analysis, ConfigError, ExperimentConfig, ScenarioKind};
pub use runner::{run_experiment, run_with_threads, Outcome, RunError, RunReport, VerdictRow};
