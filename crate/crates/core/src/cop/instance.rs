use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::CopError;
use crate::geometry::{ellipse_area, ellipse_intersection_area, CovEllipse};
use crate::tracking::{acquisition_ellipse, RadarConfig};
use crate::types::{Load, RadarId, TargetId};

/// Utility of tracking with `main` alone (`optional = None`) or paired with
/// `optional`: `1 / (1 + V/a_ref)` where `V` is the area of the main ellipse,
/// or of the intersection of both.
pub fn pair_utility(
    main: &CovEllipse,
    optional: Option<&CovEllipse>,
    a_ref: f64,
) -> Result<f64, CopError> {
    if !(a_ref > 0.0) {
        return Err(CopError::NonPositiveReference(a_ref));
    }
    let v = match optional {
        None => ellipse_area(main),
        Some(o) => ellipse_intersection_area(main, o),
    };
    Ok(1.0 / (1.0 + v / a_ref))
}

/// Area of a fresh measurement ellipse at 30 km from a default radar.
pub fn default_reference_area() -> f64 {
    let radar = RadarConfig::new(RadarId(0), crate::geometry::Vec2::ZERO);
    acquisition_ellipse(&radar, crate::geometry::Vec2::new(30_000.0, 0.0))
        .map(|e| e.area())
        .expect("default radar sees 30 km")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CopInstance {
    radars: Vec<RadarId>,
    targets: Vec<TargetId>,
    radar_index: BTreeMap<RadarId, usize>,
    target_index: BTreeMap<TargetId, usize>,
    /// `c[(i·n + k)·m + j]`.
    utility: Vec<f64>,
    /// `γ[i·m + j]`.
    gamma: Vec<Load>,
    budget: Vec<Load>,
}

impl CopInstance {
    /// `c[i][k][j]`, `gamma[i][j]`, `budget[i]` indexed by position in
    /// `radars` / `targets`.
    pub fn new(
        radars: Vec<RadarId>,
        targets: Vec<TargetId>,
        c: &[Vec<Vec<f64>>],
        gamma: &[Vec<Load>],
        budget: &[Load],
    ) -> Result<Self, CopError> {
        let (n, m) = (radars.len(), targets.len());
        let bad = |msg: String| Err(CopError::Malformed(msg));
        let radar_index: BTreeMap<_, _> = radars.iter().enumerate().map(|(i, &r)| (r, i)).collect();
        let target_index: BTreeMap<_, _> = targets.iter().enumerate().map(|(j, &t)| (t, j)).collect();
        if radar_index.len() != n || target_index.len() != m {
            return bad("duplicate ids".into());
        }
        if c.len() != n || gamma.len() != n || budget.len() != n {
            return bad(format!("expected {n} radar rows"));
        }
        let mut utility = Vec::with_capacity(n * n * m);
        for (i, row) in c.iter().enumerate() {
            if row.len() != n {
                return bad(format!("c[{i}] has {} entries, expected {n}", row.len()));
            }
            for (k, col) in row.iter().enumerate() {
                if col.len() != m {
                    return bad(format!("c[{i}][{k}] has {} entries, expected {m}", col.len()));
                }
                for &v in col {
                    if !(v.is_finite() && v >= 0.0) {
                        return bad(format!("c[{i}][{k}] holds {v}"));
                    }
                    utility.push(v);
                }
            }
        }
        let mut gam = Vec::with_capacity(n * m);
        for (i, row) in gamma.iter().enumerate() {
            if row.len() != m {
                return bad(format!("gamma[{i}] has {} entries, expected {m}", row.len()));
            }
            if let Some(g) = row.iter().find(|g| !g.is_positive()) {
                return bad(format!("gamma[{i}] holds non-positive {g}"));
            }
            gam.extend_from_slice(row);
        }
        if let Some(b) = budget.iter().find(|b| !b.is_positive()) {
            return bad(format!("non-positive budget {b}"));
        }
        Ok(Self {
            radars,
            targets,
            radar_index,
            target_index,
            utility,
            gamma: gam,
            budget: budget.to_vec(),
        })
    }

    pub fn radars(&self) -> &[RadarId] {
        &self.radars
    }

    pub fn targets(&self) -> &[TargetId] {
        &self.targets
    }

    pub fn radar_index(&self, r: RadarId) -> Result<usize, CopError> {
        self.radar_index.get(&r).copied().ok_or(CopError::UnknownRadar(r))
    }

    pub fn target_index(&self, t: TargetId) -> Result<usize, CopError> {
        self.target_index.get(&t).copied().ok_or(CopError::UnknownTarget(t))
    }

    /// `c[i][k][j]` by position.
    pub fn c(&self, i: usize, k: usize, j: usize) -> f64 {
        let (n, m) = (self.radars.len(), self.targets.len());
        self.utility[(i * n + k) * m + j]
    }

    /// `γ[i][j]` by position.
    pub fn gamma_at(&self, i: usize, j: usize) -> Load {
        self.gamma[i * self.targets.len() + j]
    }

    pub fn budget_at(&self, i: usize) -> Load {
        self.budget[i]
    }

    pub fn utility(&self, main: RadarId, optional: RadarId, target: TargetId) -> Result<f64, CopError> {
        Ok(self.c(self.radar_index(main)?, self.radar_index(optional)?, self.target_index(target)?))
    }

    pub fn gamma(&self, radar: RadarId, target: TargetId) -> Result<Load, CopError> {
        Ok(self.gamma_at(self.radar_index(radar)?, self.target_index(target)?))
    }

    pub fn budget(&self, radar: RadarId) -> Result<Load, CopError> {
        Ok(self.budget[self.radar_index(radar)?])
    }

    /// `|I|²·|J| + |J| + |I|`: one linking constraint per triple, one
    /// combination constraint per target, one budget constraint per radar.
    pub fn constraint_count(&self) -> usize {
        let (n, m) = (self.radars.len(), self.targets.len());
        n * n * m + m + n
    }

    pub fn utility_entries(&self) -> usize {
        self.utility.len()
    }

    pub fn to_file(&self) -> InstanceFile {
        let (n, m) = (self.radars.len(), self.targets.len());
        InstanceFile {
            radars: self
                .radars
                .iter()
                .zip(&self.budget)
                .map(|(&id, b)| RadarEntry { id, budget: b.units() })
                .collect(),
            targets: self.targets.clone(),
            gamma: (0..n).map(|i| (0..m).map(|j| self.gamma_at(i, j).units()).collect()).collect(),
            c: (0..n)
                .map(|i| (0..n).map(|k| (0..m).map(|j| self.c(i, k, j)).collect()).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarEntry {
    pub id: RadarId,
    pub budget: f64,
}

/// On-disk instance: `gamma[i][j]` and `c[i][k][j]` indexed by the order of
/// `radars` and `targets`; loads in real units (rounded to thousandths).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub radars: Vec<RadarEntry>,
    pub targets: Vec<TargetId>,
    pub gamma: Vec<Vec<f64>>,
    pub c: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<InstanceFile> for CopInstance {
    type Error = CopError;
    fn try_from(f: InstanceFile) -> Result<Self, CopError> {
        let gamma: Vec<Vec<Load>> = f
            .gamma
            .iter()
            .map(|row| row.iter().map(|&g| Load::from_units(g)).collect())
            .collect();
        let budget: Vec<Load> = f.radars.iter().map(|r| Load::from_units(r.budget)).collect();
        CopInstance::new(f.radars.iter().map(|r| r.id).collect(), f.targets, &f.c, &gamma, &budget)
    }
}

/// Builds the instance seen this tick. `views[i][j]` is radar `i`'s predicted
/// ellipse of target `j`, `None` when it cannot see the target; every utility
/// involving an invisible pair is zero.
pub fn build_instance(
    radars: &[RadarConfig],
    targets: &[TargetId],
    views: &[Vec<Option<CovEllipse>>],
    gamma: &[Vec<Load>],
    a_ref: f64,
) -> Result<CopInstance, CopError> {
    let (n, m) = (radars.len(), targets.len());
    if n == 0 || m == 0 {
        return Err(CopError::EmptyInstance);
    }
    if views.len() != n || views.iter().any(|v| v.len() != m) {
        return Err(CopError::Malformed("views must be radars × targets".into()));
    }
    let mut c = vec![vec![vec![0.0; m]; n]; n];
    for j in 0..m {
        for i in 0..n {
            let Some(ei) = views[i][j].as_ref() else { continue };
            c[i][i][j] = pair_utility(ei, None, a_ref)?;
            for k in (i + 1)..n {
                let Some(ek) = views[k][j].as_ref() else { continue };
                // the overlap is symmetric, so both orderings share it
                let u = pair_utility(ei, Some(ek), a_ref)?;
                c[i][k][j] = u;
                c[k][i][j] = u;
            }
        }
    }
    let budget: Vec<Load> = radars.iter().map(|r| r.budget).collect();
    CopInstance::new(radars.iter().map(|r| r.id).collect(), targets.to_vec(), &c, gamma, &budget)
}

/// One chosen radar combination; ordered by target, then main, then optional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub target: TargetId,
    pub main: RadarId,
    pub optional: RadarId,
}

impl Triple {
    pub fn new(main: RadarId, optional: RadarId, target: TargetId) -> Self {
        Self { target, main, optional }
    }

    pub fn single(radar: RadarId, target: TargetId) -> Self {
        Self::new(radar, radar, target)
    }

    pub fn is_single(&self) -> bool {
        self.main == self.optional
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Allocation {
    /// `(i, j)` with `x_M[i][j] = 1`.
    pub main: BTreeSet<(RadarId, TargetId)>,
    /// `(k, j)` with `x_O[k][j] = 1`.
    pub optional: BTreeSet<(RadarId, TargetId)>,
    pub triples: BTreeSet<Triple>,
}

impl Allocation {
    /// The allocation whose `x` variables are exactly those implied by
    /// `triples` (a single triple sets both `x_M` and `x_O` of its radar).
    pub fn from_triples<I: IntoIterator<Item = Triple>>(triples: I) -> Self {
        let mut a = Allocation::default();
        for t in triples {
            a.main.insert((t.main, t.target));
            a.optional.insert((t.optional, t.target));
            a.triples.insert(t);
        }
        a
    }

    pub fn is_empty(&self) -> bool {
        self.main.is_empty() && self.optional.is_empty() && self.triples.is_empty()
    }

    pub fn covered_targets(&self) -> BTreeSet<TargetId> {
        self.triples.iter().map(|t| t.target).collect()
    }

    /// `Σ_j γ_ij·(x_M + x_O − w_iij)` for every radar of `inst`.
    pub fn loads(&self, inst: &CopInstance) -> Result<Vec<Load>, CopError> {
        let mut loads = vec![Load::ZERO; inst.radars().len()];
        for &(r, t) in self.main.iter().chain(&self.optional) {
            let i = inst.radar_index(r)?;
            loads[i] += inst.gamma_at(i, inst.target_index(t)?);
        }
        for t in self.triples.iter().filter(|t| t.is_single()) {
            let i = inst.radar_index(t.main)?;
            loads[i] -= inst.gamma_at(i, inst.target_index(t.target)?);
        }
        Ok(loads)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    /// `w[i][k][j]` disagrees with `x_M[i][j] ∧ x_O[k][j]`.
    Linking { main: RadarId, optional: RadarId, target: TargetId, w: bool },
    /// More than one radar combination on one target.
    MultipleCombinations { target: TargetId, count: usize },
    OverBudget { radar: RadarId, load: Load, budget: Load },
}

impl Violation {
    /// Load in excess of the budget, for budget violations.
    pub fn excess(&self) -> Option<Load> {
        match *self {
            Violation::OverBudget { load, budget, .. } => Some(load - budget),
            _ => None,
        }
    }
}

/// All constraint violations of `a` on `inst`; empty iff feasible.
pub fn validate(inst: &CopInstance, a: &Allocation) -> Result<Vec<Violation>, CopError> {
    for &(r, t) in a.main.iter().chain(&a.optional) {
        inst.radar_index(r)?;
        inst.target_index(t)?;
    }
    for t in &a.triples {
        inst.radar_index(t.main)?;
        inst.radar_index(t.optional)?;
        inst.target_index(t.target)?;
    }

    let mut out = Vec::new();
    let mut per_target: BTreeMap<TargetId, (Vec<RadarId>, Vec<RadarId>, Vec<&Triple>)> = BTreeMap::new();
    for &(r, t) in &a.main {
        per_target.entry(t).or_default().0.push(r);
    }
    for &(r, t) in &a.optional {
        per_target.entry(t).or_default().1.push(r);
    }
    for tr in &a.triples {
        per_target.entry(tr.target).or_default().2.push(tr);
    }
    for (&target, (mains, optionals, triples)) in &per_target {
        let required: BTreeSet<Triple> = mains
            .iter()
            .flat_map(|&i| optionals.iter().map(move |&k| Triple::new(i, k, target)))
            .collect();
        let present: BTreeSet<Triple> = triples.iter().map(|t| **t).collect();
        for t in required.symmetric_difference(&present) {
            out.push(Violation::Linking {
                main: t.main,
                optional: t.optional,
                target,
                w: present.contains(t),
            });
        }
        if present.len() > 1 {
            out.push(Violation::MultipleCombinations { target, count: present.len() });
        }
    }
    for (i, load) in a.loads(inst)?.into_iter().enumerate() {
        let budget = inst.budget_at(i);
        if load > budget {
            out.push(Violation::OverBudget { radar: inst.radars()[i], load, budget });
        }
    }
    Ok(out)
}

/// `Σ c[i][k][j]` over the chosen triples of a feasible allocation.
pub fn objective(inst: &CopInstance, a: &Allocation) -> Result<f64, CopError> {
    let violations = validate(inst, a)?;
    if !violations.is_empty() {
        return Err(CopError::Infeasible(violations));
    }
    a.triples
        .iter()
        .map(|t| inst.utility(t.main, t.optional, t.target))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Cov2, Vec2};

    fn r(i: u32) -> RadarId {
        RadarId(i)
    }
    fn t(j: u32) -> TargetId {
        TargetId(j)
    }

    fn uniform(n: usize, m: usize, c: f64, gamma: f64, budget: f64) -> CopInstance {
        CopInstance::new(
            (1..=n as u32).map(RadarId).collect(),
            (1..=m as u32).map(TargetId).collect(),
            &vec![vec![vec![c; m]; n]; n],
            &vec![vec![Load::from_units(gamma); m]; n],
            &vec![Load::from_units(budget); n],
        )
        .unwrap()
    }

    #[test]
    fn utility_examples() {
        let tiny = CovEllipse::new(Vec2::ZERO, Cov2::diag(1e-9, 1e-9).unwrap());
        assert!(pair_utility(&tiny, None, 1.0).unwrap() > 1.0 - 1e-8);

        let e = CovEllipse::new(Vec2::new(4.0, 2.0), Cov2::new(3.0, 0.5, 2.0).unwrap());
        assert_eq!(pair_utility(&e, Some(&e), 7.0).unwrap(), pair_utility(&e, None, 7.0).unwrap());

        let a_ref = e.area();
        assert!((pair_utility(&e, None, a_ref).unwrap() - 0.5).abs() < 1e-12);
        // 1 / (1 + 0.1)
        assert!((1.0 / 1.1_f64 - 0.909).abs() < 1e-3);
        assert!(pair_utility(&e, None, 0.0).is_err());
    }

    #[test]
    fn orthogonal_thin_ellipses_gain_from_pairing() {
        let a = CovEllipse::new(Vec2::ZERO, Cov2::diag(400.0, 1.0).unwrap());
        let b = CovEllipse::new(Vec2::ZERO, Cov2::diag(1.0, 400.0).unwrap());
        let overlap = ellipse_intersection_area(&a, &b);
        let a_ref = 10.0 * overlap;
        let u = pair_utility(&a, Some(&b), a_ref).unwrap();
        assert!((u - 1.0 / 1.1).abs() < 1e-12);
        assert!(u > pair_utility(&a, None, a_ref).unwrap());
        assert!(u > pair_utility(&b, None, a_ref).unwrap());
    }

    #[test]
    fn instance_dimensions() {
        let inst = uniform(2, 3, 0.5, 0.2, 1.0);
        assert_eq!(inst.utility_entries(), 12);
        assert_eq!(inst.constraint_count(), 4 * 3 + 3 + 2);
    }

    #[test]
    fn build_marks_invisible_pairs_zero() {
        let radars = vec![
            RadarConfig::new(r(1), Vec2::new(-10_000.0, 0.0)),
            RadarConfig::new(r(2), Vec2::new(10_000.0, 0.0)),
        ];
        let targets = vec![t(1), t(2)];
        let view = |cfg: &RadarConfig, p: Vec2| acquisition_ellipse(cfg, p).ok();
        let p1 = Vec2::new(0.0, 5_000.0);
        let views = vec![
            vec![view(&radars[0], p1), None],
            vec![view(&radars[1], p1), view(&radars[1], Vec2::new(20_000.0, 0.0))],
        ];
        let gamma = vec![vec![Load::from_units(0.2); 2]; 2];
        let inst = build_instance(&radars, &targets, &views, &gamma, default_reference_area()).unwrap();
        assert_eq!(inst.c(0, 0, 1), 0.0);
        assert_eq!(inst.c(0, 1, 1), 0.0);
        assert_eq!(inst.c(1, 0, 1), 0.0);
        assert!(inst.c(1, 1, 1) > 0.0);
        // mirror-symmetric geometry
        assert!((inst.c(0, 0, 0) - inst.c(1, 1, 0)).abs() < 1e-12);
        assert!(inst.c(0, 1, 0) >= inst.c(0, 0, 0));
        assert!(matches!(
            build_instance(&radars, &[], &[vec![], vec![]], &gamma, 1.0),
            Err(CopError::EmptyInstance)
        ));
    }

    #[test]
    fn validate_examples() {
        let inst = uniform(3, 2, 0.5, 0.2, 1.0);
        assert!(validate(&inst, &Allocation::default()).unwrap().is_empty());

        let a = Allocation::from_triples([Triple::new(r(1), r(2), t(1)), Triple::single(r(3), t(1))]);
        let v = validate(&inst, &a).unwrap();
        assert!(v.iter().any(|v| matches!(v, Violation::MultipleCombinations { count: 2, .. })));

        let inst = uniform(1, 3, 0.5, 0.2, 0.4);
        let a = Allocation::from_triples((1..=3).map(|j| Triple::single(r(1), t(j))));
        let v = validate(&inst, &a).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].excess(), Some(Load::from_units(0.2)));
    }

    #[test]
    fn validate_linking() {
        let inst = uniform(2, 1, 0.5, 0.2, 1.0);
        let mut a = Allocation::from_triples([Triple::new(r(1), r(2), t(1))]);
        a.triples.clear();
        let v = validate(&inst, &a).unwrap();
        assert_eq!(v, vec![Violation::Linking { main: r(1), optional: r(2), target: t(1), w: false }]);

        let a = Allocation {
            triples: [Triple::single(r(2), t(1))].into(),
            ..Default::default()
        };
        assert!(matches!(validate(&inst, &a).unwrap()[0], Violation::Linking { w: true, .. }));

        let a = Allocation::from_triples([Triple::single(r(9), t(1))]);
        assert_eq!(validate(&inst, &a), Err(CopError::UnknownRadar(r(9))));
    }

    #[test]
    fn objective_examples() {
        let inst = uniform(2, 2, 0.5, 0.2, 1.0);
        assert_eq!(objective(&inst, &Allocation::default()).unwrap(), 0.0);
        let a = Allocation::from_triples([Triple::single(r(1), t(2))]);
        assert_eq!(objective(&inst, &a).unwrap(), inst.utility(r(1), r(1), t(2)).unwrap());
        let bad = Allocation::from_triples([Triple::single(r(1), t(1)), Triple::single(r(2), t(1))]);
        assert!(matches!(objective(&inst, &bad), Err(CopError::Infeasible(_))));
    }

    #[test]
    fn file_round_trip() {
        let inst = uniform(2, 3, 0.25, 0.2, 0.6);
        let json = serde_json::to_string(&inst.to_file()).unwrap();
        let back: InstanceFile = serde_json::from_str(&json).unwrap();
        assert_eq!(CopInstance::try_from(back).unwrap(), inst);
    }
}
