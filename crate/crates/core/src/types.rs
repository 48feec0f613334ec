//! Identifiers and the fixed-point load unit shared by every module.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// Radar (agent) identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RadarId(pub u32);

/// Global target identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TargetId(pub u32);

impl fmt::Display for RadarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for TargetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Radar-time load in fixed-point thousandths of a load unit.
///
/// Budgets and per-target costs are kept integral so that ledger arithmetic
/// (debit, refund, budget checks) is exact.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Load(pub i64);

impl Load {
    pub const SCALE: i64 = 1000;
    pub const ZERO: Load = Load(0);

    /// Rounds a real-valued load to the nearest thousandth.
    pub fn from_units(units: f64) -> Load {
        Load((units * Self::SCALE as f64).round() as i64)
    }

    pub fn units(self) -> f64 {
        self.0 as f64 / Self::SCALE as f64
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }
}

impl Add for Load {
    type Output = Load;
    fn add(self, rhs: Load) -> Load {
        Load(self.0 + rhs.0)
    }
}

impl Sub for Load {
    type Output = Load;
    fn sub(self, rhs: Load) -> Load {
        Load(self.0 - rhs.0)
    }
}

impl AddAssign for Load {
    fn add_assign(&mut self, rhs: Load) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Load {
    fn sub_assign(&mut self, rhs: Load) {
        self.0 -= rhs.0;
    }
}

impl Sum for Load {
    fn sum<I: Iterator<Item = Load>>(iter: I) -> Load {
        Load(iter.map(|l| l.0).sum())
    }
}

impl std::ops::Mul<i64> for Load {
    type Output = Load;
    fn mul(self, rhs: i64) -> Load {
        Load(self.0 * rhs)
    }
}

impl fmt::Display for Load {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}", self.units())
    }
}
