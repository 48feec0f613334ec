//! Exact branch-and-bound over per-target radar combinations.
//!
//! Every target independently picks one of: untracked, a single radar
//! `(i, i)`, or a main/optional pair `(i, k)`. Only the per-radar budgets
//! couple targets. The search walks targets depth-first, trying options in
//! decreasing reduced value, and prunes with the smaller of two bounds:
//!
//! * the linear relaxation of the multiple-choice knapsack obtained by
//!   pooling all residual budgets;
//! * the Lagrangian relaxation of the per-radar budgets, with multipliers
//!   fitted once at the root by subgradient descent. Any non-negative
//!   multipliers give a valid bound.
//!
//! Options that can never be part of a unique optimum are removed up front: a
//! pair worth no more than one of its singles (which uses a subset of its
//! load), and the lower-valued ordering of two pairs on the same radars
//! (both orderings cost the same load).
//!
//! Among allocations of equal objective the first one met in this search
//! order is kept; a new incumbent must be strictly better.

use std::time::{Duration, Instant};

use super::{Allocation, CopError, CopInstance, Triple};

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub allocation: Allocation,
    pub objective: f64,
    /// False when the time limit cut the search short.
    pub optimal: bool,
    pub nodes: u64,
}

#[derive(Debug, Clone)]
struct Choice {
    main: usize,
    optional: usize,
    value: f64,
    /// `(radar, load)` debits; one entry for singles, two for pairs.
    debits: [(usize, i64); 2],
    n_debits: usize,
}

impl Choice {
    fn total_load(&self) -> i64 {
        self.debits[..self.n_debits].iter().map(|d| d.1).sum()
    }

    fn fits(&self, residual: &[i64]) -> bool {
        self.debits[..self.n_debits].iter().all(|&(r, l)| residual[r] >= l)
    }
}

/// One segment of a target's upper concave hull in (load, value) space.
#[derive(Debug, Clone, Copy)]
struct Increment {
    depth: usize,
    load: f64,
    value: f64,
}

struct Search {
    choices: Vec<Vec<Choice>>,
    /// Target positions in search order.
    order: Vec<usize>,
    /// Hull segments of all targets, sorted by decreasing slope.
    increments: Vec<Increment>,
    lambda: Vec<f64>,
    /// Sum over search positions `depth..` of each target's best reduced value.
    reduced_suffix: Vec<f64>,
    residual: Vec<i64>,
    picked: Vec<Option<usize>>,
    best: f64,
    best_pick: Vec<Option<usize>>,
    nodes: u64,
    deadline: Option<Instant>,
    timed_out: bool,
}

/// Maximises the objective over all feasible allocations of `inst`.
pub fn solve_exact(inst: &CopInstance, time_limit: Option<Duration>) -> Result<Solution, CopError> {
    let (n, m) = (inst.radars().len(), inst.targets().len());
    if n == 0 || m == 0 {
        return Err(CopError::EmptyInstance);
    }
    let budgets: Vec<i64> = (0..n).map(|i| inst.budget_at(i).0).collect();
    let mut choices: Vec<Vec<Choice>> = (0..m).map(|j| target_choices(inst, j, &budgets)).collect();

    let (greedy_value, greedy_pick) = greedy(&choices, &budgets);
    let lambda = lagrange_multipliers(&choices, &budgets, greedy_value);
    let reduced = |c: &Choice| c.value - c.debits[..c.n_debits].iter().map(|&(r, l)| lambda[r] * l as f64).sum::<f64>();
    for opts in &mut choices {
        opts.sort_by(|a, b| {
            reduced(b)
                .total_cmp(&reduced(a))
                .then(b.value.total_cmp(&a.value))
                .then(a.main.cmp(&b.main))
                .then(a.optional.cmp(&b.optional))
        });
    }
    let best_reduced: Vec<f64> = choices
        .iter()
        .map(|opts| opts.iter().map(reduced).fold(0.0, f64::max))
        .collect();

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| best_reduced[b].total_cmp(&best_reduced[a]).then(a.cmp(&b)));
    let mut reduced_suffix = vec![0.0; m + 1];
    for d in (0..m).rev() {
        reduced_suffix[d] = reduced_suffix[d + 1] + best_reduced[order[d]];
    }

    let mut increments = Vec::new();
    for (depth, &j) in order.iter().enumerate() {
        increments.extend(hull_increments(&choices[j], depth));
    }
    // stable: equal slopes keep each target's own segment order
    increments.sort_by(|a, b| (b.value / b.load).total_cmp(&(a.value / a.load)));

    // the greedy allocation seeds the incumbent; map its picks to the
    // re-sorted option lists
    let best_pick: Vec<Option<usize>> = greedy_pick
        .iter()
        .enumerate()
        .map(|(j, p)| {
            p.and_then(|(main, optional)| choices[j].iter().position(|c| c.main == main && c.optional == optional))
        })
        .collect();

    let mut search = Search {
        choices,
        order,
        increments,
        lambda,
        reduced_suffix,
        residual: budgets,
        picked: vec![None; m],
        best: greedy_value,
        best_pick,
        nodes: 0,
        deadline: time_limit.map(|d| Instant::now() + d),
        timed_out: false,
    };
    search.dfs(0, 0.0);

    let allocation = Allocation::from_triples(search.best_pick.iter().enumerate().filter_map(|(j, p)| {
        p.map(|c| {
            let ch = &search.choices[j][c];
            Triple::new(inst.radars()[ch.main], inst.radars()[ch.optional], inst.targets()[j])
        })
    }));
    // recompute in canonical order so equal allocations give equal objectives
    let objective = super::objective(inst, &allocation)?;
    Ok(Solution {
        allocation,
        objective,
        optimal: !search.timed_out,
        nodes: search.nodes,
    })
}

fn target_choices(inst: &CopInstance, j: usize, budgets: &[i64]) -> Vec<Choice> {
    let n = inst.radars().len();
    let gamma = |i: usize| inst.gamma_at(i, j).0;
    let single = |i: usize| inst.c(i, i, j);
    let mut out = Vec::new();
    for i in 0..n {
        let v = single(i);
        if v > 0.0 && gamma(i) <= budgets[i] {
            out.push(Choice {
                main: i,
                optional: i,
                value: v,
                debits: [(i, gamma(i)), (i, 0)],
                n_debits: 1,
            });
        }
    }
    for i in 0..n {
        for k in (i + 1)..n {
            if gamma(i) > budgets[i] || gamma(k) > budgets[k] {
                continue;
            }
            let (fwd, rev) = (inst.c(i, k, j), inst.c(k, i, j));
            let (main, optional, v) = if rev > fwd { (k, i, rev) } else { (i, k, fwd) };
            let dominated = |s: usize| single(s) > 0.0 && single(s) >= v;
            if v <= 0.0 || dominated(i) || dominated(k) {
                continue;
            }
            out.push(Choice {
                main,
                optional,
                value: v,
                debits: [(i, gamma(i)), (k, gamma(k))],
                n_debits: 2,
            });
        }
    }
    out.sort_by(|a, b| {
        b.value
            .total_cmp(&a.value)
            .then(a.main.cmp(&b.main))
            .then(a.optional.cmp(&b.optional))
    });
    out
}

/// Best-first greedy fill: repeatedly take the most valuable option that
/// still fits, one per target.
fn greedy(choices: &[Vec<Choice>], budgets: &[i64]) -> (f64, Vec<Option<(usize, usize)>>) {
    let mut all: Vec<(usize, &Choice)> = choices
        .iter()
        .enumerate()
        .flat_map(|(j, opts)| opts.iter().map(move |c| (j, c)))
        .collect();
    all.sort_by(|a, b| {
        (b.1.value / b.1.total_load().max(1) as f64)
            .total_cmp(&(a.1.value / a.1.total_load().max(1) as f64))
            .then(a.0.cmp(&b.0))
    });
    let mut residual = budgets.to_vec();
    let mut pick = vec![None; choices.len()];
    let mut value = 0.0;
    for (j, c) in all {
        if pick[j].is_none() && c.fits(&residual) {
            for &(r, l) in &c.debits[..c.n_debits] {
                residual[r] -= l;
            }
            pick[j] = Some((c.main, c.optional));
            value += c.value;
        }
    }
    (value, pick)
}

/// Non-negative per-radar prices `λ` approximately minimising the
/// Lagrangian bound `Σ λ_i·B_i + Σ_j max(0, max_o (v_o − Σ_{i∈o} λ_i·γ_ij))`.
fn lagrange_multipliers(choices: &[Vec<Choice>], budgets: &[i64], incumbent: f64) -> Vec<f64> {
    const ITERATIONS: usize = 300;
    let n = budgets.len();
    let mut lambda = vec![0.0; n];
    let mut best = lambda.clone();
    let mut best_bound = f64::INFINITY;
    let mut theta = 2.0;
    let mut stale = 0;
    for _ in 0..ITERATIONS {
        let mut bound: f64 = lambda.iter().zip(budgets).map(|(l, &b)| l * b as f64).sum();
        let mut usage = vec![0i64; n];
        for opts in choices {
            let mut top: Option<(&Choice, f64)> = None;
            for c in opts {
                let r = c.value - c.debits[..c.n_debits].iter().map(|&(i, l)| lambda[i] * l as f64).sum::<f64>();
                if r > 0.0 && top.is_none_or(|(_, t)| r > t) {
                    top = Some((c, r));
                }
            }
            if let Some((c, r)) = top {
                bound += r;
                for &(i, l) in &c.debits[..c.n_debits] {
                    usage[i] += l;
                }
            }
        }
        if bound < best_bound - 1e-12 {
            best_bound = bound;
            best.clone_from(&lambda);
            stale = 0;
        } else {
            stale += 1;
            if stale >= 10 {
                theta *= 0.5;
                stale = 0;
            }
        }
        let gap = best_bound - incumbent;
        if gap <= 1e-12 || theta < 1e-6 {
            break;
        }
        let g: Vec<f64> = (0..n).map(|i| (budgets[i] - usage[i]) as f64).collect();
        let norm2: f64 = (0..n)
            .filter(|&i| !(lambda[i] == 0.0 && g[i] > 0.0))
            .map(|i| g[i] * g[i])
            .sum();
        if norm2 == 0.0 {
            break;
        }
        let step = theta * gap.max(1e-9) / norm2;
        for i in 0..n {
            lambda[i] = (lambda[i] - step * g[i]).max(0.0);
        }
    }
    best
}

/// Segments of the upper concave envelope of `{(0,0)} ∪ {(load, value)}`.
fn hull_increments(choices: &[Choice], depth: usize) -> Vec<Increment> {
    let mut pts: Vec<(f64, f64)> = choices.iter().map(|c| (c.total_load() as f64, c.value)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let mut hull: Vec<(f64, f64)> = vec![(0.0, 0.0)];
    for p in pts {
        if p.1 <= hull.last().unwrap().1 {
            continue;
        }
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            // drop b if it lies on or below the chord a→p
            if (b.1 - a.1) * (p.0 - a.0) <= (p.1 - a.1) * (b.0 - a.0) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull.windows(2)
        .map(|w| Increment {
            depth,
            load: w[1].0 - w[0].0,
            value: w[1].1 - w[0].1,
        })
        .collect()
}

impl Search {
    const CLOCK_EVERY: u64 = 1024;

    /// Relaxation bound on the value of targets at `depth..`.
    fn bound(&self, depth: usize) -> f64 {
        let lagrange: f64 = self
            .lambda
            .iter()
            .zip(&self.residual)
            .map(|(l, &r)| l * r as f64)
            .sum::<f64>()
            + self.reduced_suffix[depth];
        lagrange.min(self.pooled_bound(depth))
    }

    fn pooled_bound(&self, depth: usize) -> f64 {
        let mut capacity: f64 = self.residual.iter().map(|&r| r.max(0) as f64).sum();
        let mut total = 0.0;
        for inc in &self.increments {
            if inc.depth < depth {
                continue;
            }
            if inc.load <= capacity {
                capacity -= inc.load;
                total += inc.value;
            } else {
                total += inc.value * capacity / inc.load;
                break;
            }
        }
        total
    }

    fn dfs(&mut self, depth: usize, value: f64) {
        self.nodes += 1;
        if self.timed_out {
            return;
        }
        if self.nodes.is_multiple_of(Self::CLOCK_EVERY) {
            if let Some(d) = self.deadline {
                if Instant::now() >= d {
                    self.timed_out = true;
                    return;
                }
            }
        }
        if depth == self.order.len() {
            if value > self.best {
                self.best = value;
                self.best_pick.clone_from(&self.picked);
            }
            return;
        }
        if value + self.bound(depth) <= self.best + 1e-12 {
            return;
        }
        let j = self.order[depth];
        for c in 0..self.choices[j].len() {
            if !self.choices[j][c].fits(&self.residual) {
                continue;
            }
            let (debits, nd, v) = {
                let ch = &self.choices[j][c];
                (ch.debits, ch.n_debits, ch.value)
            };
            for &(r, l) in &debits[..nd] {
                self.residual[r] -= l;
            }
            self.picked[j] = Some(c);
            self.dfs(depth + 1, value + v);
            self.picked[j] = None;
            for &(r, l) in &debits[..nd] {
                self.residual[r] += l;
            }
            if self.timed_out {
                return;
            }
        }
        self.dfs(depth + 1, value);
    }
}
