//! Double consensus-based bundle auction.
//!
//! Every tick each radar agent bids as a main tracker, then as an optional
//! tracker paired with the current main winner, then runs one consensus
//! exchange per auction with its graph neighbours and finally measures the
//! targets it holds. Bundles are unordered: a lost target is released on its
//! own and the remaining bids are rebuilt at the next bidding phase.

mod agent;
mod belief;
mod graph;
mod round;
mod transcript;

pub use agent::{AgentState, InstanceView, MainBid, WorldView};
pub use belief::{BeliefState, BundleItem, ConsensusMessage, Role, Stamp};
pub use graph::CommGraph;
pub use round::{extract_allocation, tick, Extraction, TickReport};
pub use transcript::{replay, Transcript, TranscriptRecord};

use thiserror::Error;

use crate::tracking::TrackingError;
use crate::types::RadarId;

#[derive(Debug, Error)]
pub enum CbbaError {
    #[error("bundle size must be at least 1")]
    EmptyBundleSize,
    #[error("raw utility must be finite and non-negative, got {0}")]
    NegativeUtility(f64),
    #[error("communication graph does not match the agents: {0}")]
    GraphMismatch(String),
    #[error("unknown radar {0} in communication graph")]
    UnknownRadar(RadarId),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
    #[error("transcript: {0}")]
    Transcript(String),
    #[error("replay diverged at tick {tick}: {detail}")]
    ReplayMismatch { tick: u64, detail: String },
}

/// Bid on a task that would be the `n`-th item of the bundle.
pub fn dmg_bid(raw: f64, n: usize) -> Result<f64, CbbaError> {
    if n == 0 {
        return Err(CbbaError::EmptyBundleSize);
    }
    if !(raw >= 0.0) || !raw.is_finite() {
        return Err(CbbaError::NegativeUtility(raw));
    }
    Ok(raw / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_task_is_unbiased() {
        assert_eq!(dmg_bid(0.8, 1).unwrap(), 0.8);
    }

    #[test]
    fn fourth_task_divides_by_four() {
        assert!((dmg_bid(0.8, 4).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn bids_shrink_with_bundle() {
        for n in 1..20 {
            assert!(dmg_bid(0.37, n).unwrap() > dmg_bid(0.37, n + 1).unwrap());
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(dmg_bid(0.5, 0), Err(CbbaError::EmptyBundleSize)));
        assert!(matches!(dmg_bid(-0.1, 1), Err(CbbaError::NegativeUtility(_))));
        assert!(dmg_bid(f64::NAN, 1).is_err());
    }
}
