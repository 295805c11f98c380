//! Experiment tooling: run directories, fronts, the area metric and statistics.

pub mod artifact;
pub mod experiment;
pub mod front;
pub mod stats;

use std::path::Path;

use thiserror::Error;

pub use artifact::{list_runs, Algorithm, LogLine, PolicyFile, RunArtifact, RunConfig, RunManifest};
pub use experiment::{
    compare_runs, evaluate_point, goal_sweep, resolve_group, run_experiment, sweep_betas, union_front, ComparisonReport,
    GroupSummary, EVAL_SEED,
};
pub use front::{area_under_front, build_front, FrontPoint, NormBounds, ParetoFront};
pub use stats::{spearman, welch_t_test, WelchResult};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error("{0}: {1}")]
    Json(String, serde_json::Error),
    #[error("{0}: {1}")]
    Csv(String, csv::Error),
    #[error("unknown algorithm {0:?} (expected dqn, goal-dqn, goal-dqn-c or nsga2)")]
    UnknownAlgorithm(String),
    #[error("invalid run config: {0}")]
    Config(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("run directory already populated: {0}")]
    AlreadyExists(String),
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Train(#[from] crate::dqn::TrainError),
    #[error(transparent)]
    Evolve(#[from] crate::nsga2::EvolveError),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        ExperimentError::Io(path.display().to_string(), e)
    }
}
