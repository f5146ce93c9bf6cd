//! Closed-loop rollouts.
//!
//! Each tick the controller picks weights at the current state, an action is
//! drawn from the mixed policy, and the plant moves. Two plants are available:
//! drawing the next state from the environment kernel, or integrating the
//! sampled velocity on a continuous position that is snapped to the nearest
//! bin for the controller.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gating::{build_step_problem, objective, Continuation, SolverOptions};
use crate::model::{mix_policy, Model, Weights};
use crate::planner::{greedy_solve, LookaheadTable, Plan};
use crate::prob::{entropy, sample, FiniteDistribution, RngStream};

/// What a controller hands back for one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub weights: Weights,
    pub policy: FiniteDistribution,
    /// Per-step free energy at the chosen weights.
    pub objective: f64,
}

/// Picks gating weights at a state. Must be deterministic given `(k, x)`.
pub trait Controller: Sync {
    fn decide(&self, model: &Model, k: usize, x: usize) -> Result<Decision>;
}

/// Re-solves the one-step problem every tick with a heuristic continuation.
/// The tables of step `table_step` are used regardless of time.
#[derive(Debug, Clone)]
pub struct GreedyController<'a> {
    pub lookahead: &'a LookaheadTable,
    pub options: SolverOptions,
    pub table_step: usize,
}

impl<'a> GreedyController<'a> {
    pub fn new(lookahead: &'a LookaheadTable) -> Self {
        Self { lookahead, options: SolverOptions::default(), table_step: 1 }
    }
}

impl Controller for GreedyController<'_> {
    fn decide(&self, model: &Model, _k: usize, x: usize) -> Result<Decision> {
        let r = greedy_solve(model, self.table_step, x, self.lookahead, &self.options)?;
        let policy = mix_policy(&model.primitives, self.table_step, x, &r.weights)?;
        Ok(Decision { weights: r.weights, policy, objective: r.objective })
    }
}

/// Plays back a precomputed plan; fails once time runs past its horizon.
#[derive(Debug, Clone)]
pub struct PlanController<'a> {
    pub plan: &'a Plan,
}

impl Controller for PlanController<'_> {
    fn decide(&self, model: &Model, k: usize, x: usize) -> Result<Decision> {
        if k > self.plan.horizon {
            return Err(Error::Config(format!("plan horizon {} exhausted at step {k}", self.plan.horizon)));
        }
        let weights = self.plan.policy_table.weights(k, x).clone();
        let policy = mix_policy(&model.primitives, k, x, &weights)?;
        Ok(Decision { weights, policy, objective: self.plan.value_table.at(k)[x] })
    }
}

/// Always uses primitive `index` alone. The objective is evaluated with the
/// given continuation so records stay comparable with the greedy controller.
#[derive(Debug, Clone)]
pub struct FixedPrimitiveController<'a> {
    pub index: usize,
    pub lookahead: &'a LookaheadTable,
}

impl Controller for FixedPrimitiveController<'_> {
    fn decide(&self, model: &Model, _k: usize, x: usize) -> Result<Decision> {
        let weights = Weights::vertex(model.n_primitives(), self.index);
        let sp = build_step_problem(model, 1, x, Continuation::PerAction(self.lookahead.row(x)))?;
        let objective = objective(&sp, &weights);
        let policy = mix_policy(&model.primitives, 1, x, &weights)?;
        Ok(Decision { weights, policy, objective })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantMode {
    /// Next state drawn from the environment kernel row.
    Kernel,
    /// `p <- clip(p + v dt)` with `v` the sampled action's center; the state is the nearest bin.
    Integrator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    Index(usize),
    Distribution(Vec<f64>),
}

/// Goal region used by the stop rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalRegion {
    pub point: Vec<f64>,
    pub radius: f64,
    /// Seconds the state must stay inside before the rollout stops.
    pub idle_duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub initial: InitialState,
    pub max_steps: usize,
    pub goal: Option<GoalRegion>,
    pub dt: f64,
    pub seed: u64,
    pub stream_id: u64,
    pub plant: PlantMode,
}

impl RolloutConfig {
    /// `ceil(idle_duration / dt)`, or `None` without a goal.
    pub fn idle_steps(&self) -> Option<usize> {
        self.goal.as_ref().map(|g| (g.idle_duration / self.dt).ceil() as usize)
    }

    pub fn validate(&self, model: &Model) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if let Some(g) = &self.goal {
            if !(g.radius.is_finite() && g.radius > 0.0) {
                return Err(Error::Config(format!("goal radius must be positive, got {}", g.radius)));
            }
            if g.point.len() != model.state_grid().ndim() {
                return Err(Error::DimensionMismatch {
                    what: "goal point",
                    expected: model.state_grid().ndim(),
                    got: g.point.len(),
                });
            }
            if self.idle_steps().unwrap_or(0) < 1 {
                return Err(Error::Config("idle duration must cover at least one step".into()));
            }
        }
        match &self.initial {
            InitialState::Index(x) if *x >= model.n_states() => {
                return Err(Error::DimensionMismatch { what: "initial state bound", expected: model.n_states(), got: *x })
            }
            InitialState::Distribution(p) => crate::prob::validate_probs(p, model.n_states())?,
            _ => {}
        }
        if self.plant == PlantMode::Integrator && model.state_grid().ndim() != model.action_grid().ndim() {
            return Err(Error::Config("integrator plant needs state and action grids of equal dimension".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status", content = "message")]
pub enum TerminalStatus {
    GoalReached,
    MaxSteps,
    Error(String),
}

/// Everything recorded during one rollout. Per-tick vectors have one entry per
/// decision; `states` and `positions` also hold the final state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub states: Vec<usize>,
    pub positions: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub weights: Vec<Weights>,
    pub entropy: Vec<f64>,
    pub objective: Vec<f64>,
    pub state_cost: Vec<f64>,
    /// Mean of the mixed action distribution at each tick.
    pub mean_action: Vec<Vec<f64>>,
    pub status: TerminalStatus,
}

impl TrajectoryRecord {
    pub fn steps(&self) -> usize {
        self.actions.len()
    }

    pub fn reached_goal(&self) -> bool {
        self.status == TerminalStatus::GoalReached
    }
}

fn within(point: &[f64], goal: &GoalRegion) -> bool {
    let d2: f64 = point.iter().zip(&goal.point).map(|(a, b)| (a - b).powi(2)).sum();
    d2.sqrt() <= goal.radius
}

/// Runs one closed-loop episode.
///
/// The stop rule counts consecutive ticks that start in a bin whose center lies
/// within the goal radius; the episode ends once that count reaches
/// [`RolloutConfig::idle_steps`].
pub fn rollout(model: &Model, controller: &dyn Controller, cfg: &RolloutConfig) -> Result<TrajectoryRecord> {
    cfg.validate(model)?;
    let sg = model.state_grid().clone();
    let ag = model.action_grid().clone();
    let mut rng = RngStream::new(cfg.seed, cfg.stream_id);
    let x0 = match &cfg.initial {
        InitialState::Index(x) => *x,
        InitialState::Distribution(p) => crate::prob::sample_slice(p, &mut rng),
    };
    let lower: Vec<f64> = sg.axes().iter().map(|a| a.lower).collect();
    let upper: Vec<f64> = sg.axes().iter().map(|a| a.upper).collect();

    let mut rec = TrajectoryRecord {
        states: vec![x0],
        positions: vec![sg.center(x0)],
        actions: Vec::new(),
        weights: Vec::new(),
        entropy: Vec::new(),
        objective: Vec::new(),
        state_cost: Vec::new(),
        mean_action: Vec::new(),
        status: TerminalStatus::MaxSteps,
    };
    let idle_needed = cfg.idle_steps();
    let mut idle = 0;
    let mut x = x0;
    let mut pos = sg.center(x0);
    for t in 1..=cfg.max_steps {
        if let Some(goal) = &cfg.goal {
            idle = if within(&sg.center(x), goal) { idle + 1 } else { 0 };
        }
        let decision = match controller.decide(model, t, x) {
            Ok(d) => d,
            Err(e) => {
                rec.status = TerminalStatus::Error(e.to_string());
                return Ok(rec);
            }
        };
        let u = sample(&decision.policy, &mut rng);
        rec.actions.push(u);
        rec.entropy.push(entropy(decision.policy.probs()));
        rec.mean_action.push(decision.policy.mean());
        rec.objective.push(decision.objective);
        rec.state_cost.push(model.costs.state_cost(table_step(model, t))[x]);
        rec.weights.push(decision.weights);

        match cfg.plant {
            PlantMode::Kernel => {
                x = sample_row(model.env.row(table_step(model, t), x, u), &mut rng);
                pos = sg.center(x);
            }
            PlantMode::Integrator => {
                let v = ag.center(u);
                for d in 0..pos.len() {
                    pos[d] = (pos[d] + v[d] * cfg.dt).clamp(lower[d], upper[d]);
                }
                x = sg.nearest(&pos)?;
            }
        }
        rec.states.push(x);
        rec.positions.push(pos.clone());

        if idle_needed.is_some_and(|needed| idle >= needed) {
            rec.status = TerminalStatus::GoalReached;
            return Ok(rec);
        }
    }
    Ok(rec)
}

// Time-varying tables are held at their last step once time runs past them.
fn table_step(model: &Model, t: usize) -> usize {
    model.horizon_limit().map_or(1, |limit| t.min(limit))
}

fn sample_row(row: &[f64], rng: &mut RngStream) -> usize {
    crate::prob::sample_slice(row, rng)
}

/// One rollout per start, with `stream_id = index` so each gets its own random
/// stream. Parallel and serial runs return identical records in start order.
pub fn batch_rollouts(
    model: &Model,
    controller: &dyn Controller,
    starts: &[InitialState],
    template: &RolloutConfig,
    parallel: bool,
) -> Vec<Result<TrajectoryRecord>> {
    let run = |(i, s): (usize, &InitialState)| {
        let cfg = RolloutConfig { initial: s.clone(), stream_id: i as u64, ..template.clone() };
        rollout(model, controller, &cfg)
    };
    if parallel {
        starts.par_iter().enumerate().map(run).collect()
    } else {
        starts.iter().enumerate().map(run).collect()
    }
}
