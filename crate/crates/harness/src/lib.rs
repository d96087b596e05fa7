//! Experiment harness for the `dhsqr` estimator: JSON configuration, the
//! replicate grid runner, CSV/JSON output and the acceptance checks.

pub mod config;
pub mod error;
pub mod grid;
pub mod output;
pub mod verify;

pub use config::{Cell, ExperimentConfig, Method, Model, Noise};
pub use error::{HarnessError, Result};
pub use grid::{run_experiment_grid, GridOutput, RunRecord, TraceRow};
