use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::types::RadarId;

use super::CbbaError;

/// Undirected communication graph between radars.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphFile", into = "GraphFile")]
pub struct CommGraph {
    adj: BTreeMap<RadarId, BTreeSet<RadarId>>,
}

/// On-disk form: node list plus undirected edges.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub nodes: Vec<RadarId>,
    pub edges: Vec<(RadarId, RadarId)>,
}

impl TryFrom<GraphFile> for CommGraph {
    type Error = CbbaError;

    fn try_from(f: GraphFile) -> Result<Self, CbbaError> {
        CommGraph::from_edges(&f.nodes, &f.edges)
    }
}

impl From<CommGraph> for GraphFile {
    fn from(g: CommGraph) -> Self {
        GraphFile {
            nodes: g.nodes().collect(),
            edges: g.edges(),
        }
    }
}

impl CommGraph {
    pub fn complete(nodes: &[RadarId]) -> Self {
        let adj = nodes
            .iter()
            .map(|&a| (a, nodes.iter().copied().filter(|&b| b != a).collect()))
            .collect();
        Self { adj }
    }

    /// Path through `nodes` in the given order.
    pub fn line(nodes: &[RadarId]) -> Self {
        let edges: Vec<_> = nodes.windows(2).map(|w| (w[0], w[1])).collect();
        Self::from_edges(nodes, &edges).expect("line edges use listed nodes")
    }

    pub fn from_edges(nodes: &[RadarId], edges: &[(RadarId, RadarId)]) -> Result<Self, CbbaError> {
        let mut adj: BTreeMap<RadarId, BTreeSet<RadarId>> = nodes.iter().map(|&n| (n, BTreeSet::new())).collect();
        for &(a, b) in edges {
            for (x, y) in [(a, b), (b, a)] {
                if x == y {
                    continue;
                }
                adj.get_mut(&x).ok_or(CbbaError::UnknownRadar(x))?.insert(y);
            }
        }
        Ok(Self { adj })
    }

    /// Random connected graph: a random spanning tree plus each remaining
    /// edge with probability `extra`.
    pub fn random_connected<R: Rng + ?Sized>(nodes: &[RadarId], extra: f64, rng: &mut R) -> Self {
        let mut order = nodes.to_vec();
        order.shuffle(rng);
        let mut edges = Vec::new();
        for i in 1..order.len() {
            let parent = order[rng.random_range(0..i)];
            edges.push((parent, order[i]));
        }
        for (i, &a) in nodes.iter().enumerate() {
            for &b in &nodes[i + 1..] {
                if rng.random_bool(extra.clamp(0.0, 1.0)) {
                    edges.push((a, b));
                }
            }
        }
        Self::from_edges(nodes, &edges).expect("edges use listed nodes")
    }

    pub fn nodes(&self) -> impl Iterator<Item = RadarId> + '_ {
        self.adj.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn contains(&self, n: RadarId) -> bool {
        self.adj.contains_key(&n)
    }

    /// Neighbours in increasing id order.
    pub fn neighbors(&self, n: RadarId) -> impl Iterator<Item = RadarId> + '_ {
        self.adj.get(&n).into_iter().flatten().copied()
    }

    pub fn edges(&self) -> Vec<(RadarId, RadarId)> {
        self.adj
            .iter()
            .flat_map(|(&a, ns)| ns.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
            .collect()
    }

    fn distances(&self, from: RadarId) -> BTreeMap<RadarId, usize> {
        let mut dist = BTreeMap::from([(from, 0)]);
        let mut queue = VecDeque::from([from]);
        while let Some(n) = queue.pop_front() {
            let d = dist[&n];
            for m in self.neighbors(n) {
                if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(m) {
                    e.insert(d + 1);
                    queue.push_back(m);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.adj.keys().next().is_none_or(|&n| self.distances(n).len() == self.adj.len())
    }

    /// Longest shortest path; `None` when disconnected.
    pub fn diameter(&self) -> Option<usize> {
        let mut best = 0;
        for &n in self.adj.keys() {
            let d = self.distances(n);
            if d.len() != self.adj.len() {
                return None;
            }
            best = best.max(d.values().copied().max().unwrap_or(0));
        }
        Some(best)
    }

    /// Connected components, each sorted, in order of their smallest node.
    pub fn components(&self) -> Vec<Vec<RadarId>> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for &n in self.adj.keys() {
            if seen.contains(&n) {
                continue;
            }
            let comp: Vec<RadarId> = self.distances(n).into_keys().collect();
            seen.extend(comp.iter().copied());
            out.push(comp);
        }
        out
    }
}
