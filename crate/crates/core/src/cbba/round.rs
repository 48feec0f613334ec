use std::collections::{BTreeMap, BTreeSet};

use crate::cop::{Allocation, Triple};
use crate::types::{RadarId, TargetId};

use super::agent::{AgentState, WorldView};
use super::belief::{BeliefState, ConsensusMessage, Role};
use super::graph::CommGraph;
use super::transcript::{Transcript, TranscriptRecord};
use super::CbbaError;

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub allocation: Allocation,
    /// Targets claimed by more than one agent in the same role, counted once
    /// per extra claimant.
    pub conflicts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickReport {
    pub allocation: Allocation,
    pub conflicts: usize,
    /// Whether any agent's main bids, winners, ellipses or bundles differ
    /// from the start of the tick.
    pub main_changed: bool,
    /// Same for the optional auction.
    pub optional_changed: bool,
    pub messages: usize,
    pub dropped_messages: u64,
}

impl TickReport {
    pub fn changed(&self) -> bool {
        self.main_changed || self.optional_changed
    }
}

/// Runs one tick: main bids, optional bids, main consensus, optional
/// consensus, then each agent measures the targets it holds.
///
/// Messages move synchronously: every agent sends the snapshot it had at the
/// start of a consensus phase, and neighbours are served in id order.
pub fn tick<V: WorldView + ?Sized>(
    agents: &mut [AgentState],
    graph: &CommGraph,
    view: &V,
    now: u64,
    mut log: Option<&mut Transcript>,
) -> Result<TickReport, CbbaError> {
    let ids: BTreeSet<RadarId> = agents.iter().map(|a| a.id()).collect();
    if ids.len() != agents.len() || !ids.iter().copied().eq(graph.nodes()) {
        return Err(CbbaError::GraphMismatch(format!(
            "agents {:?}, graph nodes {:?}",
            ids,
            graph.nodes().collect::<Vec<_>>()
        )));
    }
    let index: BTreeMap<RadarId, usize> = agents.iter().enumerate().map(|(n, a)| (a.id(), n)).collect();
    let before: Vec<(BeliefState, BeliefState)> = agents.iter().map(|a| (a.main.clone(), a.optional.clone())).collect();
    let dropped_before: u64 = agents.iter().map(|a| a.dropped_messages).sum();

    for role in Role::BOTH {
        for a in agents.iter_mut() {
            a.bid_phase(role, view, now);
        }
    }
    let mut messages = 0;
    for role in Role::BOTH {
        let outgoing: Vec<ConsensusMessage> = agents.iter().map(|a| a.belief(role).message(now)).collect();
        for a in agents.iter_mut() {
            let inbox: Vec<ConsensusMessage> =
                graph.neighbors(a.id()).map(|n| outgoing[index[&n]].clone()).collect();
            messages += inbox.len();
            if let Some(log) = log.as_deref_mut() {
                log.push(TranscriptRecord::Pre {
                    tick: now,
                    role,
                    agent: a.id(),
                    belief: a.belief(role).clone(),
                });
                for m in &inbox {
                    log.push(TranscriptRecord::Msg {
                        tick: now,
                        role,
                        sender: m.sender,
                        receiver: a.id(),
                        accepted: a.accepts(role, m),
                        digest: m.digest(),
                        message: m.clone(),
                    });
                }
            }
            a.consensus_phase(role, &inbox, now);
            if let Some(log) = log.as_deref_mut() {
                log.push(TranscriptRecord::Post {
                    tick: now,
                    role,
                    agent: a.id(),
                    digest: a.belief(role).digest(),
                });
            }
        }
    }

    let model = view.motion();
    for a in agents.iter_mut() {
        let ms: Vec<_> = a
            .held_targets()
            .into_iter()
            .filter_map(|j| view.measurement(&a.radar, j, now))
            .collect();
        let cfg = a.radar.clone();
        a.tracks.advance(&cfg, &model, now, &ms)?;
    }

    let main_changed = agents.iter().zip(&before).any(|(a, (m, _))| !a.main.same_allocation_view(m));
    let optional_changed = agents.iter().zip(&before).any(|(a, (_, o))| !a.optional.same_allocation_view(o));
    let Extraction { allocation, conflicts } = extract_allocation(agents);
    Ok(TickReport {
        allocation,
        conflicts,
        main_changed,
        optional_changed,
        messages,
        dropped_messages: agents.iter().map(|a| a.dropped_messages).sum::<u64>() - dropped_before,
    })
}

/// Global allocation implied by the agents' bundles.
///
/// Each target goes to its highest main claimant (ties to the lower id),
/// paired with its highest optional claimant if any. Optional claims on
/// targets without a main claimant are dropped.
pub fn extract_allocation(agents: &[AgentState]) -> Extraction {
    let mut conflicts = 0;
    let mut winners = |role: Role| -> BTreeMap<TargetId, RadarId> {
        let mut claims: BTreeMap<TargetId, Vec<(f64, RadarId)>> = BTreeMap::new();
        for a in agents {
            for item in &a.belief(role).bundle {
                claims.entry(item.target).or_default().push((item.bid, a.id()));
            }
        }
        claims
            .into_iter()
            .map(|(j, mut c)| {
                conflicts += c.len() - 1;
                c.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                (j, c[0].1)
            })
            .collect()
    };
    let main = winners(Role::Main);
    let optional = winners(Role::Optional);
    let allocation = Allocation::from_triples(main.iter().map(|(&j, &m)| match optional.get(&j) {
        Some(&k) if k != m => Triple::new(m, k, j),
        _ => Triple::single(m, j),
    }));
    Extraction { allocation, conflicts }
}
