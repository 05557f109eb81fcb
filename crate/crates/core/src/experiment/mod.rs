//! Configuration, seeded batch execution and CSV reporting.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{default_config, load_config, parse_config, preset, AgentKind, ExperimentConfig, Preset, PRESETS};
pub use report::{aggregate, emit_csv, read_csv, Summary, CSV_HEADER};
pub use runner::{prepare, run_batch, run_experiment, run_trial, Prepared, TrialRecord};
