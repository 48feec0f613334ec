//! Command-line front end: `run` experiments, `solve` one instance, `replay`
//! an auction transcript.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Deserialize;
use thiserror::Error;

use crate::cbba::{replay, CbbaError, CommGraph, Transcript};
use crate::cop::{solve_exact, CopError, CopInstance, InstanceFile};
use crate::simkit::{
    aggregate, run_episode_logged, run_seeds, summarize, write_aggregate_csv, write_records_csv, CommPlan,
    EpisodeConfig, Method, MetricsRecord, ScenarioKind, ScenarioSpec, SimError,
};
use crate::types::RadarId;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or unreadable input files; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Failure while running; exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "radarnet", version, about = "Multi-radar multi-target allocation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run scenario episodes and write metrics CSVs and a summary.
    Run(RunArgs),
    /// Solve one allocation instance exactly.
    Solve {
        /// Instance JSON file.
        instance: PathBuf,
        /// Give up after this many milliseconds and report the best found.
        #[arg(long)]
        time_limit_ms: Option<u64>,
    },
    /// Re-run the consensus merges of a transcript and check its digests.
    Replay {
        /// Transcript file (JSON lines).
        transcript: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario family: non_saturated, few_saturated, several_saturated,
    /// many_saturated or ill_positioned.
    #[arg(long, conflicts_with = "scenario_file")]
    pub scenario: Option<String>,
    /// JSON scenario description; missing fields take the family defaults.
    #[arg(long)]
    pub scenario_file: Option<PathBuf>,
    /// Comma-separated subset of cbba,central.
    #[arg(long, default_value = "cbba,central")]
    pub methods: String,
    /// Number of seeds, or an explicit comma-separated list.
    #[arg(long, default_value = "10")]
    pub seeds: String,
    /// First seed when `--seeds` is a count.
    #[arg(long, default_value_t = 0)]
    pub seed_base: u64,
    /// Ticks per episode.
    #[arg(long, default_value_t = 200)]
    pub ticks: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Per-tick limit for the centralized solver; 0 disables it, which makes
    /// runs reproducible even when the limit would bind.
    #[arg(long, default_value_t = 100)]
    pub time_limit_ms: u64,
    /// `complete`, or a JSON graph file.
    #[arg(long, default_value = "complete")]
    pub comm_graph: String,
    /// Load of one track, overriding the scenario.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Per-radar budget, overriding the scenario.
    #[arg(long)]
    pub budget: Option<f64>,
    /// Also write the first seed's auction transcript here.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
}

/// Fully resolved experiment settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub spec: ScenarioSpec,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub episode: EpisodeConfig,
    pub transcript: Option<PathBuf>,
}

/// Graph file: one graph for the whole run, or segments starting at given
/// ticks.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum GraphFileForm {
    Single(CommGraph),
    Schedule(Vec<GraphSegment>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphSegment {
    from_tick: u64,
    nodes: Vec<RadarId>,
    edges: Vec<(RadarId, RadarId)>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let usage = |m: String| CliError::Usage(m);
        let mut spec = match (&self.scenario, &self.scenario_file) {
            (_, Some(path)) => load_scenario(path)?,
            (Some(name), None) => ScenarioSpec::new(name.parse().map_err(|e: SimError| usage(e.to_string()))?),
            (None, None) => ScenarioSpec::new(ScenarioKind::NonSaturated),
        };
        if let Some(g) = self.gamma {
            spec.gamma = g;
        }
        if let Some(b) = self.budget {
            spec.budget = b;
        }
        spec.validate().map_err(|e| usage(e.to_string()))?;

        let mut methods = Vec::new();
        for m in self.methods.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let m: Method = m.parse().map_err(|e: SimError| usage(e.to_string()))?;
            if !methods.contains(&m) {
                methods.push(m);
            }
        }
        if methods.is_empty() {
            return Err(usage("at least one method is required".into()));
        }
        let seeds = parse_seeds(&self.seeds, self.seed_base)?;
        if self.ticks == 0 {
            return Err(usage("--ticks must be positive".into()));
        }
        let radars: Vec<RadarId> = (1..=spec.n_radars as u32).map(RadarId).collect();
        let comm = if self.comm_graph == "complete" {
            CommPlan::Complete
        } else {
            load_graph(Path::new(&self.comm_graph), &radars)?
        };
        let mut episode = EpisodeConfig::new(self.ticks);
        episode.time_limit = (self.time_limit_ms > 0).then(|| Duration::from_millis(self.time_limit_ms));
        episode.comm = comm;
        Ok(RunConfig {
            spec,
            methods,
            seeds,
            out: self.out.clone(),
            episode,
            transcript: self.transcript.clone(),
        })
    }
}

fn parse_seeds(s: &str, base: u64) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Usage(format!("--seeds expects a count or a comma-separated list, got {s:?}"));
    if s.contains(',') {
        let seeds: Vec<u64> = s
            .split(',')
            .map(str::trim)
            .filter(|x| !x.is_empty())
            .map(|x| x.parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        if seeds.is_empty() {
            return Err(bad());
        }
        Ok(seeds)
    } else {
        let n: u64 = s.trim().parse().map_err(|_| bad())?;
        if n == 0 {
            return Err(bad());
        }
        Ok((base..base + n).collect())
    }
}

fn load_scenario(path: &Path) -> Result<ScenarioSpec, CliError> {
    let usage = |m: String| CliError::Usage(format!("{}: {m}", path.display()));
    let text = fs::read_to_string(path).map_err(|e| usage(e.to_string()))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| usage(e.to_string()))?;
    let serde_json::Value::Object(fields) = value else {
        return Err(usage("expected a JSON object".into()));
    };
    let kind: ScenarioKind = match fields.get("kind") {
        Some(k) => serde_json::from_value(k.clone()).map_err(|e| usage(e.to_string()))?,
        None => ScenarioKind::NonSaturated,
    };
    let serde_json::Value::Object(mut merged) =
        serde_json::to_value(ScenarioSpec::new(kind)).map_err(|e| usage(e.to_string()))?
    else {
        unreachable!("a spec serializes to an object");
    };
    merged.extend(fields);
    serde_json::from_value(serde_json::Value::Object(merged)).map_err(|e| usage(e.to_string()))
}

fn load_graph(path: &Path, radars: &[RadarId]) -> Result<CommPlan, CliError> {
    let usage = |m: String| CliError::Usage(format!("{}: {m}", path.display()));
    let text = fs::read_to_string(path).map_err(|e| usage(e.to_string()))?;
    let form: GraphFileForm = serde_json::from_str(&text).map_err(|e| usage(e.to_string()))?;
    let mut segments = match form {
        GraphFileForm::Single(g) => vec![(0, g)],
        GraphFileForm::Schedule(segs) => segs
            .into_iter()
            .map(|s| Ok((s.from_tick, CommGraph::from_edges(&s.nodes, &s.edges)?)))
            .collect::<Result<Vec<_>, CbbaError>>()
            .map_err(|e| usage(e.to_string()))?,
    };
    segments.sort_by_key(|s| s.0);
    if segments.first().is_none_or(|s| s.0 != 0) {
        return Err(usage("the first graph must start at tick 0".into()));
    }
    for (from, g) in &segments {
        if !g.nodes().eq(radars.iter().copied()) {
            return Err(usage(format!("graph from tick {from} must list exactly radars 1..={}", radars.len())));
        }
    }
    Ok(CommPlan::Schedule(segments))
}

/// Runs every seed and method, writing `metrics_seed<seed>.csv`,
/// `aggregate_<method>.csv` and `summary.txt` into the output directory.
pub fn cmd_run(cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", cfg.out.display())))?;
    info!(
        "running {} x {} seeds x {} ticks, methods {:?}",
        cfg.spec.kind,
        cfg.seeds.len(),
        cfg.episode.ticks,
        cfg.methods
    );
    let runs = run_seeds(&cfg.spec, &cfg.methods, &cfg.seeds, &cfg.episode)?;
    let per_seed = runs.len() / cfg.seeds.len();
    for (seed, chunk) in cfg.seeds.iter().zip(runs.chunks(per_seed)) {
        let records: Vec<MetricsRecord> = chunk.iter().flatten().cloned().collect();
        let f = fs::File::create(cfg.out.join(format!("metrics_seed{seed}.csv")))?;
        write_records_csv(BufWriter::new(f), &records)?;
    }
    let all: Vec<MetricsRecord> = runs.into_iter().flatten().collect();
    let rows = aggregate(&all)?;
    for &m in &cfg.methods {
        let mine: Vec<_> = rows.iter().filter(|r| r.method == m).cloned().collect();
        let f = fs::File::create(cfg.out.join(format!("aggregate_{m}.csv")))?;
        write_aggregate_csv(BufWriter::new(f), &mine)?;
    }
    let summary = summary_text(cfg, &all);
    fs::write(cfg.out.join("summary.txt"), &summary)?;
    print!("{summary}");

    if let Some(path) = &cfg.transcript {
        if cfg.methods.contains(&Method::Cbba) {
            let mut log = Transcript::new();
            let spec = cfg.spec.clone().with_seed(cfg.seeds[0]);
            run_episode_logged(&spec, Method::Cbba, &cfg.episode, Some(&mut log))?;
            log.write_jsonl(BufWriter::new(fs::File::create(path)?))?;
            info!("transcript with {} records written to {}", log.records.len(), path.display());
        }
    }
    Ok(())
}

fn summary_text(cfg: &RunConfig, records: &[MetricsRecord]) -> String {
    let s = &cfg.spec;
    let mut out = String::new();
    out.push_str(&format!("scenario   {}\n", s.kind));
    out.push_str(&format!("radars     {}\ntargets    {}\n", s.n_radars, s.n_targets));
    out.push_str(&format!("gamma      {}\nbudget     {}\n", s.gamma, s.budget));
    out.push_str(&format!("ticks      {}\n", cfg.episode.ticks));
    let seeds: Vec<String> = cfg.seeds.iter().map(u64::to_string).collect();
    out.push_str(&format!("seeds      {}\n\n", seeds.join(",")));
    out.push_str("method   utility  final_utility  load    coverage  conflicts  non_optimal_ticks  violations\n");
    let sums = summarize(records);
    for m in &sums {
        out.push_str(&format!(
            "{:<8} {:>7.4}  {:>13.4}  {:>6.4}  {:>8.4}  {:>9.3}  {:>17}  {:>10}\n",
            m.method.name(),
            m.utility,
            m.final_utility,
            m.load,
            m.coverage,
            m.conflicts,
            m.non_optimal_ticks,
            m.violations
        ));
    }
    let get = |meth: Method| sums.iter().find(|m| m.method == meth);
    if let (Some(c), Some(z)) = (get(Method::Cbba), get(Method::Central)) {
        out.push('\n');
        if z.utility > 0.0 {
            out.push_str(&format!("cbba/central utility ratio  {:.4}\n", c.utility / z.utility));
        }
        if z.load > 0.0 {
            out.push_str(&format!("cbba/central load ratio     {:.4}\n", c.load / z.load));
        }
    }
    out
}

/// Solves one instance file and prints the objective and chosen triples.
pub fn cmd_solve<W: Write>(path: &Path, time_limit: Option<Duration>, mut out: W) -> Result<(), CliError> {
    let usage = |m: String| CliError::Usage(format!("{}: {m}", path.display()));
    let f = fs::File::open(path).map_err(|e| usage(e.to_string()))?;
    let file: InstanceFile = serde_json::from_reader(BufReader::new(f)).map_err(|e| usage(e.to_string()))?;
    let inst = CopInstance::try_from(file).map_err(|e| usage(e.to_string()))?;
    match solve_exact(&inst, time_limit) {
        Ok(sol) => {
            writeln!(out, "objective {:.9}", sol.objective)?;
            writeln!(out, "optimal {}", sol.optimal)?;
            for t in &sol.allocation.triples {
                writeln!(out, "w=({},{},{})", t.main, t.optional, t.target)?;
            }
        }
        Err(CopError::EmptyInstance) => {
            writeln!(out, "objective {:.9}", 0.0)?;
            writeln!(out, "optimal true")?;
        }
        Err(e) => return Err(CliError::Runtime(e.to_string())),
    }
    Ok(())
}

/// Verifies a transcript; the error names the first diverging tick.
pub fn cmd_replay<W: Write>(path: &Path, mut out: W) -> Result<(), CliError> {
    let f = fs::File::open(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let log = Transcript::read_jsonl(BufReader::new(f)).map_err(|e| CliError::Usage(e.to_string()))?;
    match replay(&log) {
        Ok(n) => {
            writeln!(out, "ok: {n} merges verified")?;
            Ok(())
        }
        Err(e) => Err(CliError::Runtime(e.to_string())),
    }
}

/// Dispatches a parsed command line.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run(args) => cmd_run(&args.resolve()?),
        Command::Solve { instance, time_limit_ms } => {
            cmd_solve(instance, time_limit_ms.map(Duration::from_millis), std::io::stdout().lock())
        }
        Command::Replay { transcript } => cmd_replay(transcript, std::io::stdout().lock()),
    }
}
