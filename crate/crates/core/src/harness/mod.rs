//! Experiment table, run configuration, output files and the
//! finite-difference suite behind the command-line tool.

pub mod config;
pub mod experiments;
pub mod gradcheck;
pub mod runner;

pub use config::{Overrides, RunConfig};
pub use experiments::{builtin_experiments, experiment, ExperimentSpec, QUESTION_LIMIT};
pub use gradcheck::{gradcheck_suite, CaseReport};
pub use runner::{
    collect_summaries, majority, read_metrics, read_summary, run, run_observed, seed_dir, sweep,
    RunSummary, SeedOutcome, SweepSummary, METRICS_FILE, SUMMARY_FILE, SWEEP_FILE, TRANSCRIPT_FILE,
};
