//! Decentralized multi-radar multi-target allocation.
//!
//! Radars run two chained consensus-based bundle auctions every tick (one to
//! pick a main tracker per target, one to add an optional second tracker
//! whose uncertainty ellipse intersects the main one), keep Kalman tracks on
//! what they win, and are compared against an exact centralized solver of the
//! per-tick allocation problem.

pub mod cbba;
pub mod cli;
pub mod cop;
pub mod geometry;
pub mod simkit;
pub mod tracking;
pub mod types;

pub use types::{Load, RadarId, TargetId};
