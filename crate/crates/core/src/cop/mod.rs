//! The per-tick allocation problem.
//!
//! Binary variables `x_M[i][j]` (radar `i` is main tracker of target `j`),
//! `x_O[k][j]` (radar `k` is optional tracker) and `w[i][k][j] = x_M ∧ x_O`;
//! single-radar tracking is written `w[i][i][j]`. The objective is
//! `Σ c[i][k][j]·w[i][k][j]` subject to at most one radar combination per
//! target and per-radar load budgets.

mod instance;
mod solver;

pub use instance::{
    build_instance, default_reference_area, objective, pair_utility, validate, Allocation,
    CopInstance, InstanceFile, Triple, Violation,
};
pub use solver::{solve_exact, Solution};

use thiserror::Error;

use crate::types::{RadarId, TargetId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CopError {
    #[error("instance has no radars or no targets")]
    EmptyInstance,
    #[error("unknown radar {0}")]
    UnknownRadar(RadarId),
    #[error("unknown target {0}")]
    UnknownTarget(TargetId),
    #[error("malformed instance: {0}")]
    Malformed(String),
    #[error("allocation is infeasible: {0:?}")]
    Infeasible(Vec<Violation>),
    #[error("reference area must be positive, got {0}")]
    NonPositiveReference(f64),
}
