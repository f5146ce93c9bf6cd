//! Command-line front end.
//!
//! Every command parses and validates its config before touching the output
//! location, then writes `manifest.json` (status `incomplete`), then its result
//! files, then rewrites the manifest as `complete`.
//!
//! Exit codes: 0 ok, 1 check failed, 2 config or infeasible model, 3 solver, 4 I/O.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::gating::{dominant_primitive, SolverOptions};
use crate::model::{CostModel, EnvironmentKernel, GenerativeModel, Model, PrimitiveSet, RowTable, Schedule};
use crate::nav::{build_scenario, NavScenario, NavScenarioConfig};
use crate::oracle::{run_suite, Suite};
use crate::planner::{backward_recursion, LookaheadTable, Plan};
use crate::prob::{FiniteDistribution, Grid};
use crate::sim::{batch_rollouts, GoalRegion, GreedyController, InitialState, PlantMode, RolloutConfig, TrajectoryRecord};
use crate::synthetic::random_model;

/// Version of the CSV and JSON layouts written by this module.
pub const SCHEMA_VERSION: u32 = 1;
/// Environment variable overriding the worker-thread count.
pub const WORKERS_ENV: &str = "FREEGATE_WORKERS";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NotConverged { .. } => CliError::Solver(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

type CliResult<T> = std::result::Result<T, CliError>;

// ---------------------------------------------------------------- config

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Navigation,
    Tabular,
    Synthetic,
}

/// Explicit tables on indexed grids. `plant[x][u]` and `ref_plant[x][u]` are
/// next-state rows, `ref_policy[x]` and `primitives[i][x]` action rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularConfig {
    pub plant: Vec<Vec<Vec<f64>>>,
    pub ref_plant: Vec<Vec<Vec<f64>>>,
    pub ref_policy: Vec<Vec<f64>>,
    pub primitives: Vec<Vec<Vec<f64>>>,
    pub state_cost: Vec<f64>,
    #[serde(default)]
    pub action_cost: Option<Vec<f64>>,
    #[serde(default)]
    pub prior: Option<Vec<f64>>,
}

/// A random stationary instance (see [`crate::synthetic::random_model`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_primitives: usize,
    pub seed: u64,
    #[serde(default = "default_floor")]
    pub floor: f64,
}

fn default_floor() -> f64 {
    crate::prob::DEFAULT_FLOOR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutSettings {
    pub max_steps: usize,
    pub goal_radius: f64,
    pub idle_duration: f64,
    pub plant: PlantMode,
    pub seed: u64,
    /// Start positions for navigation configs.
    pub starts: Vec<[f64; 2]>,
    /// Start states for tabular and synthetic configs.
    pub start_states: Vec<usize>,
}

impl Default for RolloutSettings {
    fn default() -> Self {
        Self {
            max_steps: 3000,
            goal_radius: 0.08,
            idle_duration: 2.0,
            plant: PlantMode::Integrator,
            seed: 0,
            starts: vec![[1.3, 0.0], [1.3, 0.7], [1.3, -0.7], [0.5, 0.8], [0.3, -0.8]],
            start_states: vec![0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<NavScenarioConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tabular: Option<TabularConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub rollout: RolloutSettings,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        let present = [
            ("scenario", self.scenario.is_some(), Kind::Navigation),
            ("tabular", self.tabular.is_some(), Kind::Tabular),
            ("synthetic", self.synthetic.is_some(), Kind::Synthetic),
        ];
        for (name, is_present, kind) in present {
            if is_present && kind != self.kind {
                return Err(CliError::Config(format!("section [{name}] does not apply to kind {:?}", self.kind)));
            }
        }
        match self.kind {
            Kind::Navigation => self.scenario.clone().unwrap_or_default().validate()?,
            Kind::Tabular if self.tabular.is_none() => return Err(CliError::Config("kind tabular needs a [tabular] section".into())),
            Kind::Synthetic if self.synthetic.is_none() => {
                return Err(CliError::Config("kind synthetic needs a [synthetic] section".into()))
            }
            _ => {}
        }
        if !(self.solver.tol > 0.0 && self.solver.tol.is_finite()) || self.solver.max_iter == 0 {
            return Err(CliError::Config("solver needs a positive tol and max_iter".into()));
        }
        let r = &self.rollout;
        if r.max_steps == 0 || !(r.goal_radius > 0.0) || !(r.idle_duration > 0.0) {
            return Err(CliError::Config("rollout needs positive max_steps, goal_radius and idle_duration".into()));
        }
        Ok(())
    }

    pub fn nav_config(&self) -> NavScenarioConfig {
        self.scenario.clone().unwrap_or_default()
    }
}

/// A built problem: navigation instances keep their geometry.
pub enum Instance {
    Navigation(Box<NavScenario>),
    Abstract { model: Box<Model>, lookahead: LookaheadTable },
}

impl Instance {
    pub fn model(&self) -> &Model {
        match self {
            Instance::Navigation(s) => &s.model,
            Instance::Abstract { model, .. } => model,
        }
    }

    pub fn lookahead(&self) -> &LookaheadTable {
        match self {
            Instance::Navigation(s) => &s.lookahead,
            Instance::Abstract { lookahead, .. } => lookahead,
        }
    }
}

fn rows(name: &str, rows: &[Vec<f64>], len: usize) -> crate::Result<RowTable> {
    if rows.iter().any(|r| r.len() != len) {
        return Err(Error::Config(format!("every {name} row needs {len} entries")));
    }
    RowTable::from_data(rows.len(), len, rows.concat())
}

pub fn build_tabular(t: &TabularConfig) -> crate::Result<Model> {
    let ns = t.plant.len();
    let na = t.plant.first().map_or(0, |r| r.len());
    if ns == 0 || na == 0 {
        return Err(Error::Config("tabular tables must be non-empty".into()));
    }
    let check = |name: &str, table: &[Vec<Vec<f64>>]| {
        if table.len() != ns || table.iter().any(|r| r.len() != na) {
            return Err(Error::Config(format!("{name} must be {ns} x {na} rows")));
        }
        Ok(())
    };
    check("plant", &t.plant)?;
    check("ref_plant", &t.ref_plant)?;
    let sg = Arc::new(Grid::indexed(ns)?);
    let ag = Arc::new(Grid::indexed(na)?);
    let flat = |table: &[Vec<Vec<f64>>]| table.iter().flatten().cloned().collect::<Vec<_>>();
    let env = EnvironmentKernel::new(sg.clone(), ag.clone(), Schedule::Stationary(rows("plant", &flat(&t.plant), ns)?))?;
    let refk = EnvironmentKernel::new(sg.clone(), ag.clone(), Schedule::Stationary(rows("ref_plant", &flat(&t.ref_plant), ns)?))?;
    if t.ref_policy.len() != ns {
        return Err(Error::Config(format!("ref_policy needs {ns} rows")));
    }
    let rho = rows("ref_policy", &t.ref_policy, na)?;
    let prior = match &t.prior {
        Some(p) => FiniteDistribution::new(sg.clone(), p.clone())?,
        None => FiniteDistribution::uniform(sg.clone()),
    };
    let generative = GenerativeModel::new(refk, Schedule::Stationary(rho), prior)?;
    if t.primitives.is_empty() || t.primitives.iter().any(|p| p.len() != ns) {
        return Err(Error::Config(format!("each primitive needs {ns} rows")));
    }
    let prims = t.primitives.iter().map(|p| rows("primitive", p, na)).collect::<crate::Result<Vec<_>>>()?;
    let primitives = PrimitiveSet::new(ag, ns, Schedule::Stationary(prims))?;
    let costs = CostModel::new(
        Schedule::Stationary(t.state_cost.clone()),
        Schedule::Stationary(t.action_cost.clone().unwrap_or_else(|| vec![0.0; na])),
    )?;
    Model::new(env, generative, costs, primitives)
}

pub fn build_instance(cfg: &RunConfig) -> CliResult<Instance> {
    Ok(match cfg.kind {
        Kind::Navigation => Instance::Navigation(Box::new(build_scenario(&cfg.nav_config())?)),
        Kind::Tabular => {
            let model = build_tabular(cfg.tabular.as_ref().expect("validated"))?;
            let lookahead = LookaheadTable::build(&model, 1);
            Instance::Abstract { model: Box::new(model), lookahead }
        }
        Kind::Synthetic => {
            let s = cfg.synthetic.as_ref().expect("validated");
            if s.n_states == 0 || s.n_actions == 0 || s.n_primitives == 0 {
                return Err(CliError::Config("synthetic sizes must be positive".into()));
            }
            let model = random_model(s.n_states, s.n_actions, s.n_primitives, s.seed, s.floor);
            let lookahead = LookaheadTable::build(&model, 1);
            Instance::Abstract { model: Box::new(model), lookahead }
        }
    })
}

// ---------------------------------------------------------------- manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Incomplete,
    Complete,
}

/// Record of one run: enough to re-execute it with `replay`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub schema_version: u32,
    pub command: Command,
    pub config: Option<RunConfig>,
    pub seed: Option<u64>,
    pub status: RunStatus,
    pub timings: Vec<PhaseTiming>,
    /// Output files, relative to the manifest's directory.
    pub outputs: Vec<String>,
}

struct ManifestWriter {
    path: PathBuf,
    manifest: RunManifest,
    clock: Instant,
}

impl ManifestWriter {
    fn start(path: PathBuf, command: Command, config: Option<RunConfig>, seed: Option<u64>) -> CliResult<Self> {
        let mut w = Self {
            path,
            manifest: RunManifest {
                artifact_version: env!("CARGO_PKG_VERSION").to_string(),
                schema_version: SCHEMA_VERSION,
                command,
                config,
                seed,
                status: RunStatus::Incomplete,
                timings: Vec::new(),
                outputs: Vec::new(),
            },
            clock: Instant::now(),
        };
        w.flush()?;
        Ok(w)
    }

    fn phase(&mut self, name: &str) {
        self.manifest.timings.push(PhaseTiming { phase: name.into(), seconds: self.clock.elapsed().as_secs_f64() });
        self.clock = Instant::now();
    }

    fn output(&mut self, name: &str) {
        self.manifest.outputs.push(name.into());
    }

    fn flush(&mut self) -> CliResult<()> {
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&self.path, text + "\n").map_err(|e| io_err(&self.path, e))
    }

    fn finish(mut self) -> CliResult<()> {
        self.manifest.status = RunStatus::Complete;
        self.flush()
    }
}

// ---------------------------------------------------------------- commands

#[derive(Debug, Parser)]
#[command(name = "freegate", version, about = "Free-energy gating of control primitives")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Exact backward recursion; writes value and weight tables.
    Plan {
        config: PathBuf,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy closed-loop rollouts; writes trajectories, weight timelines and a summary.
    Rollout {
        config: PathBuf,
        /// Starts separated by ';': `x,y` positions for navigation, state indices otherwise.
        #[arg(long, allow_hyphen_values = true)]
        starts: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Navigation state cost as a CSV grid, top row first.
    Heatmap {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs one oracle suite: gradient, convexity, recursion or transcendence.
    OracleCheck {
        #[arg(long)]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-runs the command recorded in a manifest, writing into `--out`.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Applies the worker override, if set, to the global thread pool.
pub fn configure_workers() -> CliResult<()> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{WORKERS_ENV} must be a positive integer, got {raw:?}")))?;
    // A pool that is already built (e.g. a second call in-process) keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(command: Command) -> CliResult<()> {
    configure_workers()?;
    match command.clone() {
        Command::Plan { config, horizon, out } => cmd_plan(&command, &config, horizon, &out, None),
        Command::Rollout { config, starts, seed, out } => cmd_rollout(&command, &config, starts.as_deref(), seed, &out, None),
        Command::Heatmap { config, out } => cmd_heatmap(&command, &config, &out, None),
        Command::OracleCheck { suite, seed, out } => cmd_oracle_check(&command, suite, seed, out.as_deref()),
        Command::Replay { manifest, out } => cmd_replay(&manifest, &out),
    }
}

/// Entry point for the binary: parses arguments, runs, returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("freegate: {e}");
            e.exit_code()
        }
    }
}

fn load_config(path: &Path, snapshot: Option<RunConfig>) -> CliResult<RunConfig> {
    match snapshot {
        Some(c) => {
            c.validate()?;
            Ok(c)
        }
        None => RunConfig::load(path),
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Rows of already formatted CSV fields.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn write(&self, path: &Path, with_header: bool) -> CliResult<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
        if with_header {
            w.write_record(&self.header).map_err(|e| io_err(path, e))?;
        }
        for r in &self.rows {
            w.write_record(r).map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))
    }
}

fn weight_columns(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("w_{i}")).collect()
}

pub fn value_table_csv(plan: &Plan) -> Vec<Vec<String>> {
    let ns = plan.value_table.n_states();
    let mut out = Vec::new();
    for x in 0..ns {
        for k in 1..=plan.horizon + 1 {
            out.push(vec![k.to_string(), x.to_string(), num(plan.value_table.at(k)[x])]);
        }
    }
    out
}

fn cmd_plan(command: &Command, config: &Path, horizon: usize, out: &Path, snapshot: Option<RunConfig>) -> CliResult<()> {
    let cfg = load_config(config, snapshot)?;
    if horizon == 0 {
        return Err(CliError::Config("--horizon must be at least 1".into()));
    }
    create_dir(out)?;
    let mut manifest = ManifestWriter::start(out.join(MANIFEST_FILE), command.clone(), Some(cfg.clone()), None)?;
    let instance = build_instance(&cfg)?;
    manifest.phase("build");
    let model = instance.model();
    let plan = backward_recursion(model, horizon, &cfg.solver)?;
    manifest.phase("recursion");

    let mut values = Table::new(vec!["k".into(), "x_idx".into(), "value".into()]);
    values.rows = value_table_csv(&plan);
    values.write(&out.join("values.csv"), true)?;
    manifest.output("values.csv");

    let n = model.n_primitives();
    let mut header = vec!["k".to_string(), "x_idx".to_string()];
    header.extend(weight_columns(n));
    let mut weights = Table::new(header);
    for k in 1..=horizon {
        for (x, w) in plan.policy_table.step(k).iter().enumerate() {
            let mut row = vec![k.to_string(), x.to_string()];
            row.extend(w.as_slice().iter().map(|&v| num(v)));
            weights.rows.push(row);
        }
    }
    weights.write(&out.join("weights.csv"), true)?;
    manifest.output("weights.csv");

    let total = plan.total_free_energy(model.generative.initial_prior())?;
    let summary = serde_json::json!({ "schema_version": SCHEMA_VERSION, "horizon": horizon, "total_free_energy": total });
    write_json(&out.join("summary.json"), &summary)?;
    manifest.output("summary.json");
    manifest.phase("write");
    manifest.finish()
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn parse_starts(raw: &str, kind: Kind) -> CliResult<Vec<Vec<f64>>> {
    raw.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let vals: Vec<f64> = s
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| CliError::Config(format!("bad start {s:?}"))))
                .collect::<CliResult<_>>()?;
            let want = if kind == Kind::Navigation { 2 } else { 1 };
            if vals.len() != want {
                return Err(CliError::Config(format!("start {s:?} needs {want} value(s)")));
            }
            Ok(vals)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RolloutSummary {
    start: Vec<f64>,
    start_state: usize,
    status: crate::sim::TerminalStatus,
    steps: usize,
    final_position: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_obstacle_distance: Option<f64>,
    trajectory: String,
    weights: String,
}

fn cmd_rollout(
    command: &Command,
    config: &Path,
    starts: Option<&str>,
    seed: Option<u64>,
    out: &Path,
    snapshot: Option<RunConfig>,
) -> CliResult<()> {
    let cfg = load_config(config, snapshot)?;
    let starts: Vec<Vec<f64>> = match starts {
        Some(raw) => parse_starts(raw, cfg.kind)?,
        None if cfg.kind == Kind::Navigation => cfg.rollout.starts.iter().map(|s| s.to_vec()).collect(),
        None => cfg.rollout.start_states.iter().map(|&s| vec![s as f64]).collect(),
    };
    let seed = seed.unwrap_or(cfg.rollout.seed);
    create_dir(out)?;
    let mut manifest = ManifestWriter::start(out.join(MANIFEST_FILE), command.clone(), Some(cfg.clone()), Some(seed))?;
    let instance = build_instance(&cfg)?;
    manifest.phase("build");
    let model = instance.model();

    let (initial, goal, dt, plant) = match &instance {
        Instance::Navigation(sc) => {
            for s in &starts {
                if !(sc.config.x_range[0]..=sc.config.x_range[1]).contains(&s[0])
                    || !(sc.config.y_range[0]..=sc.config.y_range[1]).contains(&s[1])
                {
                    return Err(CliError::Config(format!("start {s:?} lies outside the workspace")));
                }
            }
            let initial: Vec<InitialState> = starts.iter().map(|s| InitialState::Index(sc.state_at([s[0], s[1]]))).collect();
            let goal = GoalRegion {
                point: sc.config.goal.to_vec(),
                radius: cfg.rollout.goal_radius,
                idle_duration: cfg.rollout.idle_duration,
            };
            (initial, Some(goal), sc.config.dt, cfg.rollout.plant)
        }
        Instance::Abstract { model, .. } => {
            let mut initial = Vec::new();
            for s in &starts {
                let x = s[0];
                if x < 0.0 || x.fract() != 0.0 || x as usize >= model.n_states() {
                    return Err(CliError::Config(format!("start state {x} is not a valid index")));
                }
                initial.push(InitialState::Index(x as usize));
            }
            (initial, None, 1.0, PlantMode::Kernel)
        }
    };
    let template = RolloutConfig {
        initial: InitialState::Index(0),
        max_steps: cfg.rollout.max_steps,
        goal,
        dt,
        seed,
        stream_id: 0,
        plant,
    };
    let controller = GreedyController {
        lookahead: instance.lookahead(),
        options: cfg.solver,
        table_step: 1,
    };
    let records = batch_rollouts(model, &controller, &initial, &template, true);
    manifest.phase("rollouts");

    let mut summaries = Vec::new();
    for (i, (rec, start)) in records.into_iter().zip(&starts).enumerate() {
        let rec = rec?;
        let traj_name = format!("trajectory_{i}.csv");
        let weights_name = format!("weights_{i}.csv");
        trajectory_table(model, &rec).write(&out.join(&traj_name), true)?;
        weight_timeline(model, &rec).write(&out.join(&weights_name), true)?;
        manifest.output(&traj_name);
        manifest.output(&weights_name);
        let min_obstacle_distance = match &instance {
            Instance::Navigation(sc) => Some(
                rec.positions
                    .iter()
                    .map(|p| sc.config.min_obstacle_distance([p[0], p[1]]))
                    .fold(f64::INFINITY, f64::min),
            ),
            _ => None,
        };
        summaries.push(RolloutSummary {
            start: start.clone(),
            start_state: rec.states[0],
            status: rec.status.clone(),
            steps: rec.steps(),
            final_position: rec.positions.last().cloned().unwrap_or_default(),
            min_obstacle_distance: min_obstacle_distance.filter(|d| d.is_finite()),
            trajectory: traj_name,
            weights: weights_name,
        });
    }
    let reached = summaries.iter().filter(|s| s.status == crate::sim::TerminalStatus::GoalReached).count();
    let summary = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "rollouts": summaries.len(),
        "goal_reached": reached,
        "runs": summaries,
    });
    write_json(&out.join("summary.json"), &summary)?;
    manifest.output("summary.json");
    manifest.phase("write");
    manifest.finish()
}

fn coords(v: &[f64]) -> [String; 2] {
    [v.first().map_or(String::new(), |&a| num(a)), v.get(1).map_or(String::new(), |&b| num(b))]
}

/// Columns: step, x_idx, px, py, u_idx, vx, vy, w_1..w_n, objective, state_cost.
/// Positions are the plant positions at decision time; velocities the action bin centers.
pub fn trajectory_table(model: &Model, rec: &TrajectoryRecord) -> Table {
    let mut header: Vec<String> = ["step", "x_idx", "px", "py", "u_idx", "vx", "vy"].iter().map(|s| s.to_string()).collect();
    header.extend(weight_columns(model.n_primitives()));
    header.push("objective".into());
    header.push("state_cost".into());
    let mut t = Table::new(header);
    let ag = model.action_grid();
    for s in 0..rec.steps() {
        let [px, py] = coords(&rec.positions[s]);
        let [vx, vy] = coords(&ag.center(rec.actions[s]));
        let mut row = vec![s.to_string(), rec.states[s].to_string(), px, py, rec.actions[s].to_string(), vx, vy];
        row.extend(rec.weights[s].as_slice().iter().map(|&w| num(w)));
        row.push(num(rec.objective[s]));
        row.push(num(rec.state_cost[s]));
        t.rows.push(row);
    }
    t
}

/// Columns: step, w_1..w_n, dominant, entropy.
pub fn weight_timeline(model: &Model, rec: &TrajectoryRecord) -> Table {
    let mut header = vec!["step".to_string()];
    header.extend(weight_columns(model.n_primitives()));
    header.push("dominant".into());
    header.push("entropy".into());
    let mut t = Table::new(header);
    for (s, w) in rec.weights.iter().enumerate() {
        let mut row = vec![s.to_string()];
        row.extend(w.as_slice().iter().map(|&v| num(v)));
        row.push((dominant_primitive(w) + 1).to_string());
        row.push(num(rec.entropy[s]));
        t.rows.push(row);
    }
    t
}

fn cmd_heatmap(command: &Command, config: &Path, out: &Path, snapshot: Option<RunConfig>) -> CliResult<()> {
    let cfg = load_config(config, snapshot)?;
    if cfg.kind != Kind::Navigation {
        return Err(CliError::Config("heatmap needs a navigation config".into()));
    }
    let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let file = out
        .file_name()
        .ok_or_else(|| CliError::Io(format!("{} is not a file path", out.display())))?
        .to_string_lossy()
        .to_string();
    create_dir(dir)?;
    let mut manifest =
        ManifestWriter::start(dir.join(format!("{file}.{MANIFEST_FILE}")), command.clone(), Some(cfg.clone()), None)?;
    let sc = build_scenario(&cfg.nav_config())?;
    manifest.phase("build");
    let mut t = Table::new(Vec::new());
    t.rows = sc.cost_heatmap().iter().map(|r| r.iter().map(|&v| num(v)).collect()).collect();
    t.write(out, false)?;
    manifest.output(&file);
    manifest.phase("write");
    manifest.finish()
}

/// Parses a heatmap CSV back into rows of numbers.
pub fn read_heatmap(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path).map_err(|e| io_err(path, e))?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| io_err(path, e))?;
            rec.iter()
                .map(|v| v.parse::<f64>().map_err(|e| io_err(path, e)))
                .collect()
        })
        .collect()
}

fn cmd_oracle_check(command: &Command, suite: Suite, seed: u64, out: Option<&Path>) -> CliResult<()> {
    let mut manifest = match out {
        Some(dir) => {
            create_dir(dir)?;
            Some(ManifestWriter::start(dir.join(MANIFEST_FILE), command.clone(), None, Some(seed))?)
        }
        None => None,
    };
    let report = run_suite(suite, seed);
    for c in &report.cases {
        println!("{} {} margin={:e} {}", if c.passed { "PASS" } else { "FAIL" }, c.case, c.margin, c.detail);
    }
    if let Some(m) = manifest.as_mut() {
        m.phase("suite");
        let dir = out.expect("manifest implies an output dir");
        write_json(&dir.join("report.json"), &report)?;
        m.output("report.json");
    }
    let failures: Vec<_> = report.failures().collect();
    if let Some(m) = manifest {
        m.finish()?;
    }
    if failures.is_empty() {
        println!("{}: all {} cases passed", suite.name(), report.cases.len());
        Ok(())
    } else {
        for f in &failures {
            println!("failing instance for {}: {}", f.case, serde_json::to_string(&f.instance).expect("json"));
        }
        Err(CliError::CheckFailed(format!("{} of {} {} cases failed", failures.len(), report.cases.len(), suite.name())))
    }
}

fn cmd_replay(manifest_path: &Path, out: &Path) -> CliResult<()> {
    let text = fs::read_to_string(manifest_path).map_err(|e| io_err(manifest_path, e))?;
    let m: RunManifest = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("bad manifest: {e}")))?;
    let command = m.command.clone();
    match m.command {
        Command::Plan { config, horizon, .. } => {
            let cmd = Command::Plan { config: config.clone(), horizon, out: out.to_path_buf() };
            cmd_plan(&cmd, &config, horizon, out, m.config)
        }
        Command::Rollout { config, starts, .. } => {
            let cmd = Command::Rollout { config: config.clone(), starts: starts.clone(), seed: m.seed, out: out.to_path_buf() };
            cmd_rollout(&cmd, &config, starts.as_deref(), m.seed, out, m.config)
        }
        Command::Heatmap { config, out: old } => {
            let file = old.file_name().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("heatmap.csv"));
            let target = out.join(file);
            let cmd = Command::Heatmap { config: config.clone(), out: target.clone() };
            cmd_heatmap(&cmd, &config, &target, m.config)
        }
        Command::OracleCheck { suite, .. } => {
            let cmd = Command::OracleCheck { suite, seed: m.seed.unwrap_or(0), out: Some(out.to_path_buf()) };
            cmd_oracle_check(&cmd, suite, m.seed.unwrap_or(0), Some(out))
        }
        Command::Replay { .. } => Err(CliError::Config(format!("cannot replay a replay ({command:?})"))),
    }
}
