use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geometry::CovEllipse;
use crate::types::{Load, RadarId, TargetId};

/// Which of the two chained auctions a belief or message belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Main,
    Optional,
}

impl Role {
    pub const BOTH: [Role; 2] = [Role::Main, Role::Optional];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Main => "main",
            Role::Optional => "optional",
        }
    }
}

/// Time of the last information received about an agent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Stamp {
    pub tick: u64,
    pub seq: u32,
}

impl Stamp {
    pub const NEVER: Stamp = Stamp { tick: 0, seq: 0 };

    /// Stamps of real exchanges start at 1 so they always beat `NEVER`.
    pub fn at(tick: u64) -> Stamp {
        Stamp { tick: tick + 1, seq: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BundleItem {
    pub target: TargetId,
    /// Biased bid placed on the target.
    pub bid: f64,
    /// Load debited for it.
    pub cost: Load,
}

/// One agent's knowledge of one auction.
///
/// Absent `y`/`z` entries mean "no known winner" (`y = 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    pub role: Role,
    pub owner: RadarId,
    #[serde(with = "pairs")]
    pub y: BTreeMap<TargetId, f64>,
    #[serde(with = "pairs")]
    pub z: BTreeMap<TargetId, RadarId>,
    #[serde(with = "pairs")]
    pub s: BTreeMap<RadarId, Stamp>,
    /// Ellipses behind the winning main bids.
    #[serde(with = "pairs")]
    pub e: BTreeMap<TargetId, CovEllipse>,
    /// Claimed targets in insertion order; order carries no meaning beyond
    /// the bid each item was placed at.
    pub bundle: Vec<BundleItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusMessage {
    pub sender: RadarId,
    pub role: Role,
    pub tick: u64,
    #[serde(with = "pairs")]
    pub y: BTreeMap<TargetId, f64>,
    #[serde(with = "pairs")]
    pub z: BTreeMap<TargetId, RadarId>,
    #[serde(with = "pairs")]
    pub s: BTreeMap<RadarId, Stamp>,
    #[serde(with = "pairs")]
    pub e: BTreeMap<TargetId, CovEllipse>,
}

/// Maps as `[[key, value], ...]` so they survive buffered deserialization.
mod pairs {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<K: Serialize, V: Serialize, S: Serializer>(m: &BTreeMap<K, V>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.iter())
    }

    pub fn deserialize<'de, K, V, D>(d: D) -> Result<BTreeMap<K, V>, D::Error>
    where
        K: Deserialize<'de> + Ord,
        V: Deserialize<'de>,
        D: Deserializer<'de>,
    {
        Ok(Vec::<(K, V)>::deserialize(d)?.into_iter().collect())
    }
}

/// `(bid, winner)` beats `(other_bid, other_winner)`: higher bid, or equal
/// bid and lower radar id.
pub(crate) fn beats(bid: f64, winner: RadarId, other_bid: f64, other_winner: Option<RadarId>) -> bool {
    match other_winner {
        None => bid > 0.0,
        Some(o) => bid > other_bid || (bid == other_bid && winner < o),
    }
}

enum Action {
    Update,
    Reset,
    Leave,
}

impl BeliefState {
    pub fn new(role: Role, owner: RadarId, radars: &[RadarId]) -> Self {
        Self {
            role,
            owner,
            y: BTreeMap::new(),
            z: BTreeMap::new(),
            s: radars.iter().map(|&r| (r, Stamp::NEVER)).collect(),
            e: BTreeMap::new(),
            bundle: Vec::new(),
        }
    }

    pub fn winner(&self, target: TargetId) -> Option<RadarId> {
        self.z.get(&target).copied()
    }

    pub fn winning_bid(&self, target: TargetId) -> f64 {
        self.y.get(&target).copied().unwrap_or(0.0)
    }

    pub fn holds(&self, target: TargetId) -> bool {
        self.bundle.iter().any(|b| b.target == target)
    }

    pub fn spent(&self) -> Load {
        self.bundle.iter().map(|b| b.cost).sum()
    }

    /// Records the agent's own winning bid.
    pub(crate) fn claim(&mut self, item: BundleItem, ellipse: Option<CovEllipse>) {
        self.y.insert(item.target, item.bid);
        self.z.insert(item.target, self.owner);
        match ellipse {
            Some(e) if self.role == Role::Main => {
                self.e.insert(item.target, e);
            }
            _ => {
                self.e.remove(&item.target);
            }
        }
        self.bundle.push(item);
    }

    /// Drops a bundle item and every entry this agent authored for it.
    pub(crate) fn release(&mut self, target: TargetId) -> Option<BundleItem> {
        let pos = self.bundle.iter().position(|b| b.target == target)?;
        let item = self.bundle.remove(pos);
        if self.z.get(&target) == Some(&self.owner) {
            self.clear(target);
        }
        Some(item)
    }

    fn clear(&mut self, target: TargetId) {
        self.y.remove(&target);
        self.z.remove(&target);
        self.e.remove(&target);
    }

    /// Releases the whole bundle; used when the auction restarts its bids.
    pub(crate) fn release_all(&mut self) -> Vec<BundleItem> {
        let targets: Vec<TargetId> = self.bundle.iter().map(|b| b.target).collect();
        targets.into_iter().filter_map(|t| self.release(t)).collect()
    }

    pub fn message(&self, tick: u64) -> ConsensusMessage {
        ConsensusMessage {
            sender: self.owner,
            role: self.role,
            tick,
            y: self.y.clone(),
            z: self.z.clone(),
            s: self.s.clone(),
            e: self.e.clone(),
        }
    }

    /// Folds `inbox` into this belief and returns the bundle items lost in
    /// the process.
    ///
    /// Each entry is arbitrated by the standard consensus action table: a
    /// sender's claim about itself is authoritative, higher bids win (ties to
    /// the lower radar id), and claims about third parties are trusted only
    /// when the sender has fresher contact with them.
    pub fn consensus(&mut self, inbox: &[ConsensusMessage], now: Stamp) -> Vec<BundleItem> {
        self.s.insert(self.owner, now);
        for msg in inbox {
            self.merge(msg);
            for (&r, &st) in &msg.s {
                let mine = self.s.entry(r).or_insert(Stamp::NEVER);
                if st > *mine {
                    *mine = st;
                }
            }
            self.s.insert(msg.sender, now);
        }
        let lost: Vec<TargetId> = self
            .bundle
            .iter()
            .filter(|b| self.z.get(&b.target) != Some(&self.owner))
            .map(|b| b.target)
            .collect();
        lost.into_iter()
            .filter_map(|t| {
                let pos = self.bundle.iter().position(|b| b.target == t)?;
                Some(self.bundle.remove(pos))
            })
            .collect()
    }

    fn merge(&mut self, msg: &ConsensusMessage) {
        let (me, k) = (self.owner, msg.sender);
        let stamp = |s: &BTreeMap<RadarId, Stamp>, r: RadarId| s.get(&r).copied().unwrap_or(Stamp::NEVER);
        let targets: std::collections::BTreeSet<TargetId> =
            msg.z.keys().chain(self.z.keys()).copied().collect();
        for j in targets {
            let (zk, yk) = (msg.z.get(&j).copied(), msg.y.get(&j).copied().unwrap_or(0.0));
            let (zi, yi) = (self.winner(j), self.winning_bid(j));
            let newer = |r: RadarId| stamp(&msg.s, r) > stamp(&self.s, r);
            let older = |r: RadarId| stamp(&msg.s, r) < stamp(&self.s, r);
            let act = match zk {
                Some(w) if w == k => match zi {
                    Some(x) if x == me => {
                        if beats(yk, k, yi, Some(me)) { Action::Update } else { Action::Leave }
                    }
                    Some(x) if x == k => Action::Update,
                    Some(m) => {
                        if newer(m) || beats(yk, k, yi, Some(m)) { Action::Update } else { Action::Leave }
                    }
                    None => Action::Update,
                },
                Some(w) if w == me => match zi {
                    Some(x) if x == me => Action::Leave,
                    Some(x) if x == k => Action::Reset,
                    Some(m) => {
                        if newer(m) { Action::Reset } else { Action::Leave }
                    }
                    None => Action::Leave,
                },
                Some(m) => match zi {
                    Some(x) if x == me => {
                        if newer(m) && beats(yk, m, yi, Some(me)) { Action::Update } else { Action::Leave }
                    }
                    Some(x) if x == k => {
                        if newer(m) { Action::Update } else { Action::Reset }
                    }
                    Some(x) if x == m => {
                        if newer(m) { Action::Update } else { Action::Leave }
                    }
                    Some(n) => {
                        if newer(m) && newer(n) {
                            Action::Update
                        } else if newer(m) && beats(yk, m, yi, Some(n)) {
                            Action::Update
                        } else if newer(n) && older(m) {
                            Action::Reset
                        } else {
                            Action::Leave
                        }
                    }
                    None => {
                        if newer(m) { Action::Update } else { Action::Leave }
                    }
                },
                None => match zi {
                    Some(x) if x == me => Action::Leave,
                    Some(x) if x == k => Action::Update,
                    Some(m) => {
                        if newer(m) { Action::Update } else { Action::Leave }
                    }
                    None => Action::Leave,
                },
            };
            match act {
                Action::Leave => {}
                Action::Reset => self.clear(j),
                Action::Update => match zk {
                    None => self.clear(j),
                    Some(w) => {
                        self.y.insert(j, yk);
                        self.z.insert(j, w);
                        match msg.e.get(&j) {
                            Some(e) if self.role == Role::Main => {
                                self.e.insert(j, *e);
                            }
                            _ => {
                                self.e.remove(&j);
                            }
                        }
                    }
                },
            }
        }
    }

    /// Canonical digest of `y`, `z`, `s`, `e` and the bundle.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update([self.role as u8]);
        h.update(self.owner.0.to_le_bytes());
        hash_vectors(&mut h, &self.y, &self.z, &self.s, &self.e);
        for b in &self.bundle {
            h.update(b.target.0.to_le_bytes());
            h.update(b.bid.to_bits().to_le_bytes());
            h.update(b.cost.0.to_le_bytes());
        }
        hex::encode(&h.finalize()[..16])
    }

    /// Content compared when looking for a consensus fixed point: every
    /// vector except the timestamps, which advance on every exchange.
    pub fn same_allocation_view(&self, other: &BeliefState) -> bool {
        self.y == other.y && self.z == other.z && self.e == other.e && self.bundle == other.bundle
    }

    /// Checks the structural invariants; returns a description of the first
    /// one broken.
    pub fn check(&self) -> Result<(), String> {
        for (j, w) in &self.z {
            if *w == self.owner && !self.holds(*j) {
                return Err(format!("z[{j}] = self but {j} not in bundle"));
            }
        }
        for b in &self.bundle {
            if !(b.bid > 0.0) {
                return Err(format!("bundle item {} has bid {}", b.target, b.bid));
            }
            if self.y.get(&b.target) != Some(&b.bid) {
                return Err(format!("y[{}] differs from own bid", b.target));
            }
        }
        if self.role == Role::Optional && !self.e.is_empty() {
            return Err("optional belief carries ellipses".into());
        }
        if self.e.keys().any(|j| !self.z.contains_key(j)) {
            return Err("ellipse without winner".into());
        }
        Ok(())
    }
}

impl ConsensusMessage {
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update([self.role as u8]);
        h.update(self.sender.0.to_le_bytes());
        h.update(self.tick.to_le_bytes());
        hash_vectors(&mut h, &self.y, &self.z, &self.s, &self.e);
        hex::encode(&h.finalize()[..16])
    }
}

fn hash_vectors(
    h: &mut Sha256,
    y: &BTreeMap<TargetId, f64>,
    z: &BTreeMap<TargetId, RadarId>,
    s: &BTreeMap<RadarId, Stamp>,
    e: &BTreeMap<TargetId, CovEllipse>,
) {
    h.update((y.len() as u64).to_le_bytes());
    for (j, v) in y {
        h.update(j.0.to_le_bytes());
        h.update(v.to_bits().to_le_bytes());
    }
    h.update((z.len() as u64).to_le_bytes());
    for (j, w) in z {
        h.update(j.0.to_le_bytes());
        h.update(w.0.to_le_bytes());
    }
    h.update((s.len() as u64).to_le_bytes());
    for (r, st) in s {
        h.update(r.0.to_le_bytes());
        h.update(st.tick.to_le_bytes());
        h.update(st.seq.to_le_bytes());
    }
    h.update((e.len() as u64).to_le_bytes());
    for (j, el) in e {
        h.update(j.0.to_le_bytes());
        for v in [el.center.x, el.center.y, el.cov.xx(), el.cov.xy(), el.cov.yy(), el.scale()] {
            h.update(v.to_bits().to_le_bytes());
        }
    }
}
