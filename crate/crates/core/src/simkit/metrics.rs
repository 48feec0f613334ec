use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use super::episode::{MetricsRecord, Method};
use super::SimError;

#[derive(Debug, Serialize)]
struct RecordRow<'a> {
    tick: u64,
    method: &'a str,
    seed: u64,
    scenario: &'a str,
    utility: f64,
    load_mean: f64,
    coverage: f64,
    conflicts: usize,
}

/// One row per record: `tick,method,seed,scenario,utility,load_mean,coverage,conflicts`.
pub fn write_records_csv<W: Write>(w: W, records: &[MetricsRecord]) -> Result<(), SimError> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(RecordRow {
            tick: r.tick,
            method: r.method.name(),
            seed: r.seed,
            scenario: &r.scenario,
            utility: r.utility,
            load_mean: r.load_mean,
            coverage: r.coverage,
            conflicts: r.conflicts,
        })?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Stat {
    pub mean: f64,
    /// Unbiased; zero for a single sample.
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Stat {
        let n = xs.len();
        if n == 0 {
            return Stat::default();
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Stat { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub tick: u64,
    pub method: Method,
    pub seeds: usize,
    pub utility: Stat,
    pub load_mean: Stat,
    pub coverage: Stat,
    pub conflicts: Stat,
}

/// Mean and standard deviation across seeds of every metric, per method and
/// tick.
pub fn aggregate(records: &[MetricsRecord]) -> Result<Vec<AggregateRow>, SimError> {
    if records.is_empty() {
        return Err(SimError::NoRecords);
    }
    let mut groups: BTreeMap<(Method, u64), Vec<&MetricsRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.method, r.tick)).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|((method, tick), rs)| {
            let col = |f: fn(&MetricsRecord) -> f64| Stat::of(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            AggregateRow {
                tick,
                method,
                seeds: rs.len(),
                utility: col(|r| r.utility),
                load_mean: col(|r| r.load_mean),
                coverage: col(|r| r.coverage),
                conflicts: col(|r| r.conflicts as f64),
            }
        })
        .collect())
}

#[derive(Debug, Serialize)]
struct AggregateCsvRow<'a> {
    tick: u64,
    method: &'a str,
    seeds: usize,
    utility_mean: f64,
    utility_std: f64,
    load_mean: f64,
    load_std: f64,
    coverage_mean: f64,
    coverage_std: f64,
    conflicts_mean: f64,
    conflicts_std: f64,
}

pub fn write_aggregate_csv<W: Write>(w: W, rows: &[AggregateRow]) -> Result<(), SimError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(AggregateCsvRow {
            tick: r.tick,
            method: r.method.name(),
            seeds: r.seeds,
            utility_mean: r.utility.mean,
            utility_std: r.utility.std,
            load_mean: r.load_mean.mean,
            load_std: r.load_mean.std,
            coverage_mean: r.coverage.mean,
            coverage_std: r.coverage.std,
            conflicts_mean: r.conflicts.mean,
            conflicts_std: r.conflicts.std,
        })?;
    }
    out.flush()?;
    Ok(())
}

/// Whole-run averages for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub seeds: usize,
    pub ticks: usize,
    pub utility: f64,
    pub load: f64,
    pub coverage: f64,
    pub conflicts: f64,
    /// Mean over seeds of the last tick's utility.
    pub final_utility: f64,
    pub non_optimal_ticks: usize,
    pub violations: usize,
}

pub fn summarize(records: &[MetricsRecord]) -> Vec<MethodSummary> {
    let mut by_method: BTreeMap<Method, Vec<&MetricsRecord>> = BTreeMap::new();
    for r in records {
        by_method.entry(r.method).or_default().push(r);
    }
    by_method
        .into_iter()
        .map(|(method, rs)| {
            let n = rs.len() as f64;
            let mean = |f: fn(&MetricsRecord) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            let last_tick = rs.iter().map(|r| r.tick).max().unwrap_or(0);
            let finals: Vec<f64> = rs.iter().filter(|r| r.tick == last_tick).map(|r| r.utility).collect();
            let seeds: std::collections::BTreeSet<u64> = rs.iter().map(|r| r.seed).collect();
            MethodSummary {
                method,
                seeds: seeds.len(),
                ticks: last_tick as usize + 1,
                utility: mean(|r| r.utility),
                load: mean(|r| r.load_mean),
                coverage: mean(|r| r.coverage),
                conflicts: mean(|r| r.conflicts as f64),
                final_utility: Stat::of(&finals).mean,
                non_optimal_ticks: rs.iter().filter(|r| !r.optimal).count(),
                violations: rs.iter().map(|r| r.violations).sum(),
            }
        })
        .collect()
}
