//! Shared oracles and generators for the integration and acceptance tests.
#![allow(dead_code)]

use rand::Rng;
use radarnet::cbba::{tick, AgentState, CommGraph, InstanceView, TickReport};
use radarnet::cop::{build_instance, default_reference_area, CopInstance};
use radarnet::geometry::{CovEllipse, Vec2};
use radarnet::tracking::{acquisition_ellipse, RadarConfig};
use radarnet::{Load, RadarId, TargetId};

/// Exhaustive optimum: every target independently takes nothing or one
/// ordered `(main, optional)` pair, singles included.
pub fn brute_force(inst: &CopInstance) -> f64 {
    let (n, m) = (inst.radars().len(), inst.targets().len());
    let mut options: Vec<Option<(usize, usize)>> = vec![None];
    for i in 0..n {
        for k in 0..n {
            options.push(Some((i, k)));
        }
    }
    let mut best = 0.0f64;
    let mut pick = vec![0usize; m];
    loop {
        let mut load = vec![Load::ZERO; n];
        let mut value = 0.0;
        for (j, &p) in pick.iter().enumerate() {
            if let Some((i, k)) = options[p] {
                load[i] += inst.gamma_at(i, j);
                if k != i {
                    load[k] += inst.gamma_at(k, j);
                }
                value += inst.c(i, k, j);
            }
        }
        if (0..n).all(|i| load[i] <= inst.budget_at(i)) {
            best = best.max(value);
        }
        let mut pos = 0;
        loop {
            if pos == m {
                return best;
            }
            pick[pos] += 1;
            if pick[pos] < options.len() {
                break;
            }
            pick[pos] = 0;
            pos += 1;
        }
    }
}

fn ids(n: usize) -> (Vec<RadarId>, Vec<TargetId>) {
    ((1..=n as u32).map(RadarId).collect(), Vec::new())
}

/// Unstructured instance: arbitrary singles, pairs at least as good as
/// either single, loads and budgets in thousandths.
pub fn random_instance<R: Rng>(rng: &mut R, n: usize, m: usize) -> CopInstance {
    let mut c = vec![vec![vec![0.0f64; m]; n]; n];
    for j in 0..m {
        for i in 0..n {
            if rng.random_bool(0.8) {
                c[i][i][j] = rng.random_range(0.05..1.0);
            }
        }
        for i in 0..n {
            for k in 0..n {
                if i != k && c[i][i][j] > 0.0 && c[k][k][j] > 0.0 {
                    let lo = c[i][i][j].max(c[k][k][j]);
                    c[i][k][j] = lo + rng.random_range(0.0..1.0) * (1.0 - lo);
                }
            }
        }
    }
    let gamma: Vec<Vec<Load>> = (0..n)
        .map(|_| (0..m).map(|_| Load(rng.random_range(100..=600))).collect())
        .collect();
    let budget: Vec<Load> = (0..n).map(|_| Load(rng.random_range(300..=1500))).collect();
    CopInstance::new(
        ids(n).0,
        (1..=m as u32).map(TargetId).collect(),
        &c,
        &gamma,
        &budget,
    )
    .unwrap()
}

/// Instance built from fresh measurement ellipses of radars and targets
/// scattered over a 60 km square.
pub fn geometric_instance<R: Rng>(rng: &mut R, n: usize, m: usize) -> CopInstance {
    let radars: Vec<RadarConfig> = (1..=n as u32)
        .map(|i| {
            let mut cfg = RadarConfig::new(
                RadarId(i),
                Vec2::new(rng.random_range(0.0..60_000.0), rng.random_range(0.0..60_000.0)),
            );
            cfg.budget = Load(rng.random_range(400..=1000));
            cfg
        })
        .collect();
    let points: Vec<Vec2> = (0..m)
        .map(|_| Vec2::new(rng.random_range(0.0..60_000.0), rng.random_range(0.0..60_000.0)))
        .collect();
    let views: Vec<Vec<Option<CovEllipse>>> = radars
        .iter()
        .map(|r| {
            points
                .iter()
                .map(|&p| if r.sees(p) { acquisition_ellipse(r, p).ok() } else { None })
                .collect()
        })
        .collect();
    let gamma: Vec<Vec<Load>> = (0..n)
        .map(|_| (0..m).map(|_| Load(rng.random_range(150..=350))).collect())
        .collect();
    let targets: Vec<TargetId> = (1..=m as u32).map(TargetId).collect();
    build_instance(&radars, &targets, &views, &gamma, default_reference_area()).unwrap()
}

pub struct FixedPoint {
    /// Consensus rounds until the main auction settled.
    pub main_rounds: u64,
    /// Further rounds until the optional auction settled.
    pub optional_rounds: u64,
    pub last: TickReport,
    pub agents: Vec<AgentState>,
}

/// Ticks a static instance until a tick leaves every belief unchanged.
pub fn run_to_fixed_point(inst: &CopInstance, graph: &CommGraph, limit: u64) -> Option<FixedPoint> {
    let view = InstanceView::new(inst);
    let mut agents = view.agents();
    let (mut main_done, mut opt_done) = (0, 0);
    for t in 0..limit {
        let r = tick(&mut agents, graph, &view, t, None).unwrap();
        for a in &agents {
            a.check().unwrap();
        }
        if r.main_changed {
            main_done = t + 1;
        }
        if r.optional_changed {
            opt_done = t + 1;
        }
        if !r.changed() {
            return Some(FixedPoint {
                main_rounds: main_done,
                optional_rounds: opt_done.saturating_sub(main_done),
                last: r,
                agents,
            });
        }
    }
    None
}

/// Fraction of `n` uniform samples over the overlap of the two axis-aligned
/// bounding boxes that fall in both ellipses, scaled to an area.
pub fn monte_carlo_intersection<R: Rng>(a: &CovEllipse, b: &CovEllipse, n: usize, rng: &mut R) -> f64 {
    let bbox = |e: &CovEllipse| {
        let (hx, hy) = (e.scale() * e.cov.xx().sqrt(), e.scale() * e.cov.yy().sqrt());
        (e.center.x - hx, e.center.x + hx, e.center.y - hy, e.center.y + hy)
    };
    let (ax0, ax1, ay0, ay1) = bbox(a);
    let (bx0, bx1, by0, by1) = bbox(b);
    let (x0, x1, y0, y1) = (ax0.max(bx0), ax1.min(bx1), ay0.max(by0), ay1.min(by1));
    if x0 >= x1 || y0 >= y1 {
        return 0.0;
    }
    let mut hits = 0usize;
    for _ in 0..n {
        let p = Vec2::new(rng.random_range(x0..x1), rng.random_range(y0..y1));
        if a.contains(p) && b.contains(p) {
            hits += 1;
        }
    }
    hits as f64 / n as f64 * (x1 - x0) * (y1 - y0)
}
