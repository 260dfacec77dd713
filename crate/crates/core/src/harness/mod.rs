//! Experiment harness: configs, repeated runs, trajectory and metrics
//! files, optimizer comparisons and schedule grid search.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{DataSpec, ExperimentConfig, GridSpec, InitSpec, ObjectiveSpec};
pub use report::{compare, grid_search, median, Comparison, ComparisonRow, GridReport, GridRow};
pub use runner::{execute, execute_one, sample_init, with_threads, write_artifacts, Problem, RunResult, TraceRow};
