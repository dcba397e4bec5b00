//! Configuration, experiment drivers and reporting behind the `accelmc` binary.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{ConfigError, ExperimentConfig, Kind, Tolerances};
pub use experiments::{run_experiment, ResultRow, RunError};
pub use report::{write_csv, Summary};
