//! Seeded experiments: configuration, parallel runs with per-seed result
//! files, learning-curve statistics and the verification suite.

pub mod config;
pub mod experiment;
pub mod stats;
pub mod verify;

pub use config::{
    ArmConfig, ArmShaping, ExperimentConfig, LearnerSection, ResolvedConfig, MULTI_TASK_GROUP,
};
pub use experiment::{
    load_results, run_experiment, summarize, summarize_dir, write_mean_curves, ArmSummary,
    ComparisonSummary, RunResult, TaskSummary,
};
pub use verify::{verify, VerifyOptions, VerifyReport};
