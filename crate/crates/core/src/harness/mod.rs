//! Experiment harness: JSON configs, multi-seed runs, evaluation,
//! aggregation and reporting.

mod config;
mod report;
mod runner;

pub use config::{ExperimentConfig, HeadMode, Protocol};
pub use report::{emit_report, reaggregate, AggregateReport, CurvePoint, Report, RunMetrics, Timing};
pub use runner::{build_stream, density_sweep, evaluate, run_experiment, run_single, EvalResult};
