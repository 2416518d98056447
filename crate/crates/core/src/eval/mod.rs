//! Repeated-run evaluation: accuracy at each taxonomy level, mismatch
//! decomposition, confusion matrices, timings and model comparison.

mod compare;
mod metrics;
mod mismatch;
mod report;

pub use compare::{compare_models, ComparisonRow, ComparisonTable, Ranks};
pub use metrics::{accuracy, mean, ConfusionMatrix};
pub use mismatch::{mismatch_analysis, MismatchBreakdown};
pub use report::{repeated_runs, repeated_runs_observed, EvalReport, LevelAccuracy, RunResult, Timings};
