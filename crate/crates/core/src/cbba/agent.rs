use std::collections::BTreeSet;

use crate::cop::CopInstance;
use crate::geometry::{CovEllipse, Vec2};
use crate::tracking::{MotionModel, PolarMeasurement, RadarConfig, TrackBook};
use crate::types::{Load, RadarId, TargetId};

use super::belief::{beats, BeliefState, BundleItem, ConsensusMessage, Role, Stamp};
use super::dmg_bid;

/// Raw main-role utility of a target and the ellipse behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MainBid {
    pub utility: f64,
    pub ellipse: Option<CovEllipse>,
}

/// What an agent can observe about the world when bidding.
pub trait WorldView {
    fn targets(&self) -> &[TargetId];

    fn gamma(&self, radar: RadarId, target: TargetId) -> Load;

    /// Single-radar utility for `agent` as main tracker; `None` when it
    /// cannot track the target.
    fn main_bid(&self, agent: &AgentState, target: TargetId, tick: u64) -> Option<MainBid>;

    /// Pair utility for `agent` as optional tracker next to main radar
    /// `main`; `None` when pairing would not beat the main radar alone.
    fn optional_bid(
        &self,
        agent: &AgentState,
        target: TargetId,
        main: RadarId,
        main_ellipse: Option<&CovEllipse>,
        tick: u64,
    ) -> Option<f64>;

    fn measurement(&self, _radar: &RadarConfig, _target: TargetId, _tick: u64) -> Option<PolarMeasurement> {
        None
    }

    fn motion(&self) -> MotionModel {
        MotionModel::default()
    }
}

/// A radar taking part in the auctions.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub radar: RadarConfig,
    pub tracks: TrackBook,
    pub main: BeliefState,
    pub optional: BeliefState,
    pub spent_main: Load,
    pub spent_optional: Load,
    /// Messages rejected for naming unknown radars or targets.
    pub dropped_messages: u64,
    known_radars: BTreeSet<RadarId>,
    known_targets: BTreeSet<TargetId>,
}

struct Candidate {
    target: TargetId,
    utility: f64,
    ellipse: Option<CovEllipse>,
    cost: Load,
}

impl AgentState {
    pub fn new(radar: RadarConfig, radars: &[RadarId], targets: &[TargetId]) -> Self {
        let id = radar.id;
        Self {
            radar,
            tracks: TrackBook::new(),
            main: BeliefState::new(Role::Main, id, radars),
            optional: BeliefState::new(Role::Optional, id, radars),
            spent_main: Load::ZERO,
            spent_optional: Load::ZERO,
            dropped_messages: 0,
            known_radars: radars.iter().copied().collect(),
            known_targets: targets.iter().copied().collect(),
        }
    }

    pub fn id(&self) -> RadarId {
        self.radar.id
    }

    pub fn belief(&self, role: Role) -> &BeliefState {
        match role {
            Role::Main => &self.main,
            Role::Optional => &self.optional,
        }
    }

    pub fn spent(&self) -> Load {
        self.spent_main + self.spent_optional
    }

    /// Targets this agent measures this tick.
    pub fn held_targets(&self) -> BTreeSet<TargetId> {
        self.main.bundle.iter().chain(&self.optional.bundle).map(|b| b.target).collect()
    }

    /// Rebuilds this agent's bundle for `role` from scratch.
    ///
    /// Targets are added greedily by biased bid while the bid beats the best
    /// known one and the load fits. Main bidding may spend the budget held by
    /// optional tasks; those with the lowest bids are dropped to make room.
    pub fn bid_phase<V: WorldView + ?Sized>(&mut self, role: Role, view: &V, tick: u64) {
        let me = self.id();
        match role {
            Role::Main => {
                self.main.release_all();
                self.spent_main = Load::ZERO;
                let candidates: Vec<Candidate> = view
                    .targets()
                    .iter()
                    .filter_map(|&j| {
                        let bid = view.main_bid(self, j, tick)?;
                        (bid.utility > 0.0).then(|| Candidate {
                            target: j,
                            utility: bid.utility,
                            ellipse: bid.ellipse,
                            cost: view.gamma(me, j),
                        })
                    })
                    .collect();
                let budget = self.radar.budget;
                while let Some(c) = self.pick(Role::Main, &candidates, budget - self.spent_main) {
                    let bid = dmg_bid(c.utility, self.main.bundle.len() + 1).unwrap_or(0.0);
                    self.main.claim(BundleItem { target: c.target, bid, cost: c.cost }, c.ellipse);
                    self.spent_main += c.cost;
                    if let Some(item) = self.optional.release(c.target) {
                        self.spent_optional -= item.cost;
                    }
                    while self.spent() > budget {
                        let Some(low) = self
                            .optional
                            .bundle
                            .iter()
                            .min_by(|a, b| a.bid.total_cmp(&b.bid).then(b.target.cmp(&a.target)))
                            .map(|b| b.target)
                        else {
                            break;
                        };
                        if let Some(item) = self.optional.release(low) {
                            self.spent_optional -= item.cost;
                        }
                    }
                }
            }
            Role::Optional => {
                self.optional.release_all();
                self.spent_optional = Load::ZERO;
                let candidates: Vec<Candidate> = view
                    .targets()
                    .iter()
                    .filter_map(|&j| {
                        if self.main.holds(j) {
                            return None;
                        }
                        let m = self.main.winner(j).filter(|&m| m != me)?;
                        let utility = view.optional_bid(self, j, m, self.main.e.get(&j), tick)?;
                        (utility > 0.0).then(|| Candidate {
                            target: j,
                            utility,
                            ellipse: None,
                            cost: view.gamma(me, j),
                        })
                    })
                    .collect();
                let budget = self.radar.budget;
                while let Some(c) = self.pick(Role::Optional, &candidates, budget - self.spent()) {
                    let bid = dmg_bid(c.utility, self.optional.bundle.len() + 1).unwrap_or(0.0);
                    self.optional.claim(BundleItem { target: c.target, bid, cost: c.cost }, None);
                    self.spent_optional += c.cost;
                }
            }
        }
    }

    /// Best qualifying candidate not yet in the bundle; ties go to the
    /// earlier (lower id) target.
    fn pick<'c>(&self, role: Role, candidates: &'c [Candidate], available: Load) -> Option<&'c Candidate> {
        let belief = self.belief(role);
        let n = belief.bundle.len() + 1;
        let mut best: Option<(&Candidate, f64)> = None;
        for c in candidates {
            if c.cost > available || belief.holds(c.target) {
                continue;
            }
            let bid = dmg_bid(c.utility, n).unwrap_or(0.0);
            if !beats(bid, self.id(), belief.winning_bid(c.target), belief.winner(c.target)) {
                continue;
            }
            if best.is_none_or(|(_, b)| bid > b) {
                best = Some((c, bid));
            }
        }
        best.map(|(c, _)| c)
    }

    /// True when every id in `msg` is known to this agent.
    pub fn accepts(&self, role: Role, msg: &ConsensusMessage) -> bool {
        msg.role == role
            && msg.sender != self.id()
            && self.known_radars.contains(&msg.sender)
            && msg.s.keys().all(|r| self.known_radars.contains(r))
            && msg.z.values().all(|r| self.known_radars.contains(r))
            && msg.y.keys().chain(msg.z.keys()).chain(msg.e.keys()).all(|j| self.known_targets.contains(j))
    }

    /// Merges the neighbours' messages for `role`, refunds lost tasks and
    /// returns the outgoing snapshot.
    pub fn consensus_phase(&mut self, role: Role, inbox: &[ConsensusMessage], tick: u64) -> ConsensusMessage {
        let valid: Vec<ConsensusMessage> = inbox.iter().filter(|m| self.accepts(role, m)).cloned().collect();
        self.dropped_messages += (inbox.len() - valid.len()) as u64;
        let now = Stamp::at(tick);
        let (belief, spent) = match role {
            Role::Main => (&mut self.main, &mut self.spent_main),
            Role::Optional => (&mut self.optional, &mut self.spent_optional),
        };
        for item in belief.consensus(&valid, now) {
            *spent -= item.cost;
        }
        belief.message(tick)
    }

    /// Checks the ledger and belief invariants.
    pub fn check(&self) -> Result<(), String> {
        self.main.check()?;
        self.optional.check()?;
        if self.spent_main != self.main.spent() || self.spent_optional != self.optional.spent() {
            return Err(format!("{}: ledger out of sync with bundles", self.id()));
        }
        if self.spent() > self.radar.budget {
            return Err(format!("{}: spent {} over budget {}", self.id(), self.spent(), self.radar.budget));
        }
        if let Some(j) = self.main.bundle.iter().find(|b| self.optional.holds(b.target)) {
            return Err(format!("{}: {} held in both roles", self.id(), j.target));
        }
        Ok(())
    }
}

/// A static world given by a precomputed utility table.
#[derive(Debug, Clone, Copy)]
pub struct InstanceView<'a> {
    inst: &'a CopInstance,
}

impl<'a> InstanceView<'a> {
    pub fn new(inst: &'a CopInstance) -> Self {
        Self { inst }
    }

    /// One agent per radar of the instance, with the instance budgets.
    pub fn agents(&self) -> Vec<AgentState> {
        let radars = self.inst.radars();
        radars
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let mut cfg = RadarConfig::new(r, Vec2::ZERO);
                cfg.budget = self.inst.budget_at(i);
                AgentState::new(cfg, radars, self.inst.targets())
            })
            .collect()
    }

    fn indices(&self, radar: RadarId, target: TargetId) -> Option<(usize, usize)> {
        Some((self.inst.radar_index(radar).ok()?, self.inst.target_index(target).ok()?))
    }
}

impl WorldView for InstanceView<'_> {
    fn targets(&self) -> &[TargetId] {
        self.inst.targets()
    }

    fn gamma(&self, radar: RadarId, target: TargetId) -> Load {
        self.indices(radar, target).map_or(Load::ZERO, |(i, j)| self.inst.gamma_at(i, j))
    }

    fn main_bid(&self, agent: &AgentState, target: TargetId, _tick: u64) -> Option<MainBid> {
        let (i, j) = self.indices(agent.id(), target)?;
        let utility = self.inst.c(i, i, j);
        (utility > 0.0).then_some(MainBid { utility, ellipse: None })
    }

    fn optional_bid(
        &self,
        agent: &AgentState,
        target: TargetId,
        main: RadarId,
        _main_ellipse: Option<&CovEllipse>,
        _tick: u64,
    ) -> Option<f64> {
        let (k, j) = self.indices(agent.id(), target)?;
        let m = self.inst.radar_index(main).ok()?;
        let pair = self.inst.c(m, k, j);
        (pair > self.inst.c(m, m, j)).then_some(pair)
    }
}
