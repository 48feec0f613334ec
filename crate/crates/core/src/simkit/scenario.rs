use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::tracking::RadarConfig;
use crate::types::{Load, RadarId, TargetId};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    NonSaturated,
    FewSaturated,
    SeveralSaturated,
    ManySaturated,
    IllPositioned,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::NonSaturated,
        ScenarioKind::FewSaturated,
        ScenarioKind::SeveralSaturated,
        ScenarioKind::ManySaturated,
        ScenarioKind::IllPositioned,
    ];

    /// Default `(radars, targets)`.
    pub fn counts(self) -> (usize, usize) {
        match self {
            ScenarioKind::NonSaturated => (5, 10),
            ScenarioKind::FewSaturated => (3, 12),
            ScenarioKind::SeveralSaturated => (5, 20),
            ScenarioKind::ManySaturated => (8, 30),
            ScenarioKind::IllPositioned => (4, 20),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::NonSaturated => "non_saturated",
            ScenarioKind::FewSaturated => "few_saturated",
            ScenarioKind::SeveralSaturated => "several_saturated",
            ScenarioKind::ManySaturated => "many_saturated",
            ScenarioKind::IllPositioned => "ill_positioned",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SimError::InvalidSpec(format!("unknown scenario {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Centres of a near-square grid over the field.
    Grid,
    /// Uniform inside the lower-left square of 1/16 of the field area.
    Clustered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n_radars: usize,
    pub n_targets: usize,
    /// Width and height in metres.
    pub field: [f64; 2],
    pub placement: Placement,
    /// Target speed range in m/s.
    pub speed: [f64; 2],
    /// Largest magnitude of a target's constant turn rate, rad/s.
    pub max_turn_rate: f64,
    /// Load of one track on one radar.
    pub gamma: f64,
    /// Per-radar load budget per tick.
    pub budget: f64,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self::new(ScenarioKind::NonSaturated)
    }
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind) -> Self {
        let (n_radars, n_targets) = kind.counts();
        Self {
            kind,
            n_radars,
            n_targets,
            field: [100_000.0, 100_000.0],
            placement: if kind == ScenarioKind::IllPositioned {
                Placement::Clustered
            } else {
                Placement::Grid
            },
            speed: [100.0, 300.0],
            max_turn_rate: 0.01,
            gamma: 0.2,
            budget: 1.0,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_radars == 0 || self.n_targets == 0 {
            return Err(SimError::EmptyScenario);
        }
        let bad = |m: &str| Err(SimError::InvalidSpec(m.into()));
        if !self.field.iter().all(|&f| f.is_finite() && f > 0.0) {
            return bad("field dimensions must be positive");
        }
        if !(self.speed[0] >= 0.0 && self.speed[0] <= self.speed[1] && self.speed[1].is_finite()) {
            return bad("speed range must satisfy 0 <= min <= max");
        }
        if !(self.max_turn_rate >= 0.0 && self.max_turn_rate.is_finite()) {
            return bad("max_turn_rate must be non-negative");
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) || !(self.budget > 0.0 && self.budget.is_finite()) {
            return bad("gamma and budget must be positive");
        }
        Ok(())
    }

    pub fn gamma_load(&self) -> Load {
        Load::from_units(self.gamma)
    }

    /// The lower-left square holding clustered radars.
    pub fn cluster_extent(&self) -> [f64; 2] {
        [self.field[0] / 4.0, self.field[1] / 4.0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub id: TargetId,
    pub position: Vec2,
    pub velocity: Vec2,
    /// Constant heading rate, rad/s.
    pub turn_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub spec: ScenarioSpec,
    pub radars: Vec<RadarConfig>,
    pub targets: Vec<Target>,
    pub time: f64,
}

impl World {
    pub fn target_ids(&self) -> Vec<TargetId> {
        self.targets.iter().map(|t| t.id).collect()
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.targets.iter().map(|t| t.position).collect()
    }
}

/// Places radars and spawns targets on the field edges heading inwards.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<World, SimError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let [w, h] = spec.field;
    let positions: Vec<Vec2> = match spec.placement {
        Placement::Grid => {
            let cols = (spec.n_radars as f64).sqrt().ceil() as usize;
            let rows = spec.n_radars.div_ceil(cols);
            (0..spec.n_radars)
                .map(|n| {
                    let (r, c) = (n / cols, n % cols);
                    Vec2::new((c as f64 + 0.5) * w / cols as f64, (r as f64 + 0.5) * h / rows as f64)
                })
                .collect()
        }
        Placement::Clustered => {
            let [cw, ch] = spec.cluster_extent();
            (0..spec.n_radars)
                .map(|_| Vec2::new(rng.random_range(0.0..cw), rng.random_range(0.0..ch)))
                .collect()
        }
    };
    let radars = positions
        .into_iter()
        .enumerate()
        .map(|(n, p)| {
            let mut cfg = RadarConfig::new(RadarId(n as u32 + 1), p);
            cfg.budget = Load::from_units(spec.budget);
            cfg
        })
        .collect();
    let targets = (0..spec.n_targets)
        .map(|n| {
            let (position, inward) = match rng.random_range(0..4) {
                0 => (Vec2::new(rng.random_range(0.0..w), 0.0), std::f64::consts::FRAC_PI_2),
                1 => (Vec2::new(w, rng.random_range(0.0..h)), std::f64::consts::PI),
                2 => (Vec2::new(rng.random_range(0.0..w), h), -std::f64::consts::FRAC_PI_2),
                _ => (Vec2::new(0.0, rng.random_range(0.0..h)), 0.0),
            };
            let heading = inward + rng.random_range(-1.0..1.0) * std::f64::consts::FRAC_PI_3;
            let speed = if spec.speed[1] > spec.speed[0] {
                rng.random_range(spec.speed[0]..spec.speed[1])
            } else {
                spec.speed[0]
            };
            let turn_rate = if spec.max_turn_rate > 0.0 {
                rng.random_range(-spec.max_turn_rate..spec.max_turn_rate)
            } else {
                0.0
            };
            Target {
                id: TargetId(n as u32 + 1),
                position,
                velocity: Vec2::from_polar(speed, heading),
                turn_rate,
            }
        })
        .collect();
    Ok(World {
        spec: spec.clone(),
        radars,
        targets,
        time: 0.0,
    })
}

/// Advances every target by `dt`; targets crossing the field boundary are
/// mirrored back inside with the matching velocity component flipped.
pub fn step_world(world: &World, dt: f64) -> Result<World, SimError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::NonPositiveStep(dt));
    }
    let [w, h] = world.spec.field;
    let mut next = world.clone();
    next.time += dt;
    for t in &mut next.targets {
        let (s, c) = (t.turn_rate * dt).sin_cos();
        let v = Vec2::new(c * t.velocity.x - s * t.velocity.y, s * t.velocity.x + c * t.velocity.y);
        let mut p = t.position + v * dt;
        let mut v = v;
        (p.x, v.x) = reflect(p.x, v.x, w);
        (p.y, v.y) = reflect(p.y, v.y, h);
        t.position = p;
        t.velocity = v;
    }
    Ok(next)
}

fn reflect(mut x: f64, mut v: f64, size: f64) -> (f64, f64) {
    // a step never exceeds the field size in practice; loop for safety
    for _ in 0..8 {
        if x < 0.0 {
            x = -x;
            v = v.abs();
        } else if x > size {
            x = 2.0 * size - x;
            v = -v.abs();
        } else {
            break;
        }
    }
    (x.clamp(0.0, size), v)
}
