//! Experiment harness around `parareal-core`: configuration files, the
//! spin-up, the experiment runner and report emission.

pub mod config;
pub mod experiment;
pub mod report;
pub mod spinup;

pub use config::{parse_config, parse_config_str, ConfigError, ExperimentConfig};
pub use experiment::{restart_consistency_study, run_experiment, RunEnv};
pub use report::{emit_report, RunReport};
