//! Scenario generation, world dynamics and episode runs comparing the
//! auction against the exact centralized allocation.

mod episode;
mod metrics;
mod scenario;

pub use episode::{run_episode, run_episode_logged, CommPlan, EpisodeConfig, Method, MetricsRecord};
pub use metrics::{
    aggregate, summarize, write_aggregate_csv, write_records_csv, AggregateRow, MethodSummary, Stat,
};
pub use scenario::{generate_scenario, step_world, Placement, ScenarioKind, ScenarioSpec, Target, World};

use rayon::prelude::*;
use thiserror::Error;

use crate::cbba::CbbaError;
use crate::cop::CopError;
use crate::tracking::TrackingError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario needs at least one radar and one target")]
    EmptyScenario,
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("an episode needs at least one tick")]
    NoTicks,
    #[error("nothing to aggregate")]
    NoRecords,
    #[error(transparent)]
    Cop(#[from] CopError),
    #[error(transparent)]
    Cbba(#[from] CbbaError),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Runs every `(seed, method)` episode in parallel; results come back in
/// seed-major, method-minor order regardless of scheduling.
pub fn run_seeds(
    spec: &ScenarioSpec,
    methods: &[Method],
    seeds: &[u64],
    cfg: &EpisodeConfig,
) -> Result<Vec<Vec<MetricsRecord>>, SimError> {
    let jobs: Vec<(u64, Method)> = seeds
        .iter()
        .flat_map(|&s| methods.iter().map(move |&m| (s, m)))
        .collect();
    jobs.par_iter()
        .map(|&(seed, method)| run_episode(&spec.clone().with_seed(seed), method, cfg))
        .collect()
}
