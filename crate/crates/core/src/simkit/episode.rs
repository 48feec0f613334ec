use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cbba::{self, AgentState, CommGraph, MainBid, Transcript, WorldView};
use crate::cop::{
    build_instance, default_reference_area, objective, pair_utility, solve_exact, validate, Allocation,
    CopInstance,
};
use crate::geometry::{CovEllipse, Vec2};
use crate::tracking::{
    measurement_seed, synthesize_measurement, MotionModel, PolarMeasurement, RadarConfig, TrackBook,
};
use crate::types::{Load, RadarId, TargetId};

use super::scenario::{generate_scenario, step_world, ScenarioSpec};
use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cbba,
    Central,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Cbba, Method::Central];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cbba => "cbba",
            Method::Central => "central",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| SimError::InvalidSpec(format!("unknown method {s:?}")))
    }
}

/// Communication topology over an episode.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum CommPlan {
    #[default]
    Complete,
    /// `(first_tick, graph)` segments sorted by first tick; each graph holds
    /// until the next segment starts.
    Schedule(Vec<(u64, CommGraph)>),
}

impl CommPlan {
    pub fn graph_at(&self, tick: u64, radars: &[RadarId]) -> Result<CommGraph, SimError> {
        match self {
            CommPlan::Complete => Ok(CommGraph::complete(radars)),
            CommPlan::Schedule(segments) => segments
                .iter()
                .rev()
                .find(|(from, _)| *from <= tick)
                .map(|(_, g)| g.clone())
                .ok_or_else(|| SimError::InvalidSpec(format!("no communication graph for tick {tick}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpisodeConfig {
    pub ticks: u64,
    /// Wall-clock cap on each centralized solve.
    pub time_limit: Option<Duration>,
    pub comm: CommPlan,
    pub motion: MotionModel,
    /// Area at which a track's utility is one half.
    pub a_ref: f64,
}

impl EpisodeConfig {
    pub fn new(ticks: u64) -> Self {
        Self {
            ticks,
            time_limit: Some(Duration::from_millis(100)),
            comm: CommPlan::Complete,
            motion: MotionModel::default(),
            a_ref: default_reference_area(),
        }
    }
}

/// Metrics of one method on one tick of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub tick: u64,
    pub method: Method,
    pub seed: u64,
    pub scenario: String,
    /// Objective of the realized allocation on this tick's instance.
    pub utility: f64,
    /// Per-radar load as a fraction of budget.
    pub loads: Vec<f64>,
    pub load_mean: f64,
    pub coverage: f64,
    pub conflicts: usize,
    /// False when the centralized solve hit its time limit.
    pub optimal: bool,
    /// Constraint violations of the realized allocation.
    pub violations: usize,
    /// Pairs whose joint utility fell below a member's single utility.
    pub pairing_violations: usize,
    pub elapsed: Duration,
}

/// Runs `spec` for `cfg.ticks` ticks with `method` and returns one record
/// per tick.
pub fn run_episode(spec: &ScenarioSpec, method: Method, cfg: &EpisodeConfig) -> Result<Vec<MetricsRecord>, SimError> {
    run_episode_logged(spec, method, cfg, None)
}

/// As [`run_episode`], appending the auction transcript to `log`.
pub fn run_episode_logged(
    spec: &ScenarioSpec,
    method: Method,
    cfg: &EpisodeConfig,
    mut log: Option<&mut Transcript>,
) -> Result<Vec<MetricsRecord>, SimError> {
    if cfg.ticks == 0 {
        return Err(SimError::NoTicks);
    }
    let mut world = generate_scenario(spec)?;
    let radars = world.radars.clone();
    let radar_ids: Vec<RadarId> = radars.iter().map(|r| r.id).collect();
    let targets = world.target_ids();
    let (n, m) = (radars.len(), targets.len());
    let gamma = vec![vec![spec.gamma_load(); m]; n];
    let mut books = vec![TrackBook::new(); n];
    let mut agents: Vec<AgentState> = radars
        .iter()
        .map(|r| AgentState::new(r.clone(), &radar_ids, &targets))
        .collect();
    let mut out = Vec::with_capacity(cfg.ticks as usize);

    for t in 0..cfg.ticks {
        let start = Instant::now();
        let truth = world.positions();
        let views: Vec<Vec<Option<CovEllipse>>> = (0..n)
            .map(|i| {
                let book = match method {
                    Method::Central => &books[i],
                    Method::Cbba => &agents[i].tracks,
                };
                (0..m)
                    .map(|j| book.bid_ellipse(&radars[i], &cfg.motion, targets[j], truth[j], t))
                    .collect()
            })
            .collect();
        let inst = build_instance(&radars, &targets, &views, &gamma, cfg.a_ref)?;

        let (allocation, loads, conflicts, optimal) = match method {
            Method::Central => {
                let sol = solve_exact(&inst, cfg.time_limit)?;
                let held = held_by_radar(&sol.allocation, &radar_ids);
                for (i, book) in books.iter_mut().enumerate() {
                    let ms: Vec<PolarMeasurement> = held[i]
                        .iter()
                        .filter_map(|&j| measure(&radars[i], j, truth[target_pos(&targets, j)], t, spec.seed))
                        .collect();
                    book.advance(&radars[i], &cfg.motion, t, &ms)?;
                }
                let loads = sol.allocation.loads(&inst)?;
                (sol.allocation, loads, 0, sol.optimal)
            }
            Method::Cbba => {
                let view = SimView {
                    targets: &targets,
                    index: radar_ids.iter().enumerate().map(|(i, &r)| (r, i)).collect(),
                    views: &views,
                    truth: &truth,
                    gamma: spec.gamma_load(),
                    a_ref: cfg.a_ref,
                    seed: spec.seed,
                    motion: cfg.motion,
                };
                let graph = cfg.comm.graph_at(t, &radar_ids)?;
                let report = cbba::tick(&mut agents, &graph, &view, t, log.as_deref_mut())?;
                let loads = agents.iter().map(|a| a.spent()).collect();
                (report.allocation, loads, report.conflicts, true)
            }
        };

        let violations = validate(&inst, &allocation)?.len();
        let utility = if violations == 0 {
            objective(&inst, &allocation)?
        } else {
            raw_value(&inst, &allocation)?
        };
        let loads: Vec<f64> = loads
            .iter()
            .zip(&radars)
            .map(|(l, r)| l.0 as f64 / r.budget.0 as f64)
            .collect();
        out.push(MetricsRecord {
            tick: t,
            method,
            seed: spec.seed,
            scenario: spec.kind.name().to_string(),
            utility,
            load_mean: loads.iter().sum::<f64>() / n as f64,
            loads,
            coverage: allocation.covered_targets().len() as f64 / m as f64,
            conflicts,
            optimal,
            violations,
            pairing_violations: pairing_violations(&inst),
            elapsed: start.elapsed(),
        });
        world = step_world(&world, cfg.motion.dt)?;
    }
    Ok(out)
}

fn target_pos(targets: &[TargetId], j: TargetId) -> usize {
    targets.iter().position(|&t| t == j).expect("allocation targets come from the world")
}

fn held_by_radar(a: &Allocation, radars: &[RadarId]) -> Vec<Vec<TargetId>> {
    radars
        .iter()
        .map(|r| {
            a.triples
                .iter()
                .filter(|t| t.main == *r || t.optional == *r)
                .map(|t| t.target)
                .collect()
        })
        .collect()
}

fn measure(cfg: &RadarConfig, target: TargetId, truth: Vec2, tick: u64, seed: u64) -> Option<PolarMeasurement> {
    if !cfg.sees(truth) {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(measurement_seed(seed, cfg.id, target, tick));
    synthesize_measurement(cfg, target, truth, tick, &mut rng).ok()
}

fn raw_value(inst: &CopInstance, a: &Allocation) -> Result<f64, SimError> {
    let mut v = 0.0;
    for t in &a.triples {
        v += inst.utility(t.main, t.optional, t.target)?;
    }
    Ok(v)
}

/// Pairs of visible radars whose joint utility is below either single one,
/// which would mean an overlap larger than one of the ellipses.
fn pairing_violations(inst: &CopInstance) -> usize {
    let (n, m) = (inst.radars().len(), inst.targets().len());
    let mut bad = 0;
    for j in 0..m {
        for i in 0..n {
            for k in 0..n {
                let (ci, ck, cp) = (inst.c(i, i, j), inst.c(k, k, j), inst.c(i, k, j));
                if i != k && ci > 0.0 && ck > 0.0 && cp < ci.max(ck) {
                    bad += 1;
                }
            }
        }
    }
    bad
}

/// What agents see during a simulated tick: their own predicted ellipses
/// and, for pairing, the main winner's ellipse relayed through consensus.
struct SimView<'a> {
    targets: &'a [TargetId],
    index: BTreeMap<RadarId, usize>,
    views: &'a [Vec<Option<CovEllipse>>],
    truth: &'a [Vec2],
    gamma: Load,
    a_ref: f64,
    seed: u64,
    motion: MotionModel,
}

impl SimView<'_> {
    fn own(&self, radar: RadarId, target: TargetId) -> Option<&CovEllipse> {
        let i = *self.index.get(&radar)?;
        self.views[i][target_pos(self.targets, target)].as_ref()
    }
}

impl WorldView for SimView<'_> {
    fn targets(&self) -> &[TargetId] {
        self.targets
    }

    fn gamma(&self, _radar: RadarId, _target: TargetId) -> Load {
        self.gamma
    }

    fn main_bid(&self, agent: &AgentState, target: TargetId, _tick: u64) -> Option<MainBid> {
        let e = *self.own(agent.id(), target)?;
        let utility = pair_utility(&e, None, self.a_ref).ok()?;
        Some(MainBid { utility, ellipse: Some(e) })
    }

    fn optional_bid(
        &self,
        agent: &AgentState,
        target: TargetId,
        _main: RadarId,
        main_ellipse: Option<&CovEllipse>,
        _tick: u64,
    ) -> Option<f64> {
        let main_e = main_ellipse?;
        let own = self.own(agent.id(), target)?;
        let pair = pair_utility(main_e, Some(own), self.a_ref).ok()?;
        let single = pair_utility(main_e, None, self.a_ref).ok()?;
        (pair > single).then_some(pair)
    }

    fn measurement(&self, radar: &RadarConfig, target: TargetId, tick: u64) -> Option<PolarMeasurement> {
        measure(radar, target, self.truth[target_pos(self.targets, target)], tick, self.seed)
    }

    fn motion(&self) -> MotionModel {
        self.motion
    }
}
