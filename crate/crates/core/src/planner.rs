//! Backward recursion over a finite horizon and the one-step greedy controller.
//!
//! The recursion runs `k = N, ..., 1`. At every step each state gets its own
//! gating problem whose continuation is the value table of step `k + 1`, with
//! `l_{N+1} = 0`. States are solved in parallel; steps are strictly sequential.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gating::{build_step_problem, solve, Continuation, SolveReport, SolverOptions};
use crate::model::{check_feasibility, mix_policy, Model, Violation, Weights};
use crate::prob::{dot, FiniteDistribution};

/// Cost-to-go values `l_k(x)` for `k = 1..=N+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    values: Vec<Vec<f64>>,
}

impl ValueTable {
    /// Values at step `k` (1-based, up to `N + 1`).
    pub fn at(&self, k: usize) -> &[f64] {
        &self.values[k - 1]
    }

    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn n_states(&self) -> usize {
        self.values[0].len()
    }
}

/// Optimal weights `w*_k(x)` for `k = 1..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    weights: Vec<Vec<Weights>>,
}

impl PolicyTable {
    pub fn weights(&self, k: usize, x: usize) -> &Weights {
        &self.weights[k - 1][x]
    }

    pub fn step(&self, k: usize) -> &[Weights] {
        &self.weights[k - 1]
    }

    pub fn horizon(&self) -> usize {
        self.weights.len()
    }

    /// Mixed action distribution at `(k, x)`.
    pub fn policy(&self, model: &Model, k: usize, x: usize) -> Result<FiniteDistribution> {
        mix_policy(&model.primitives, k, x, self.weights(k, x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub value_table: ValueTable,
    pub policy_table: PolicyTable,
    pub horizon: usize,
}

impl Plan {
    /// `E_{x0 ~ prior} l_1(x0)`.
    pub fn total_free_energy(&self, prior: &FiniteDistribution) -> Result<f64> {
        let l1 = self.value_table.at(1);
        if prior.len() != l1.len() {
            return Err(Error::DimensionMismatch {
                what: "prior",
                expected: l1.len(),
                got: prior.len(),
            });
        }
        Ok(dot(prior.probs(), l1))
    }
}

fn feasibility_error(model: &Model) -> Result<()> {
    let report = check_feasibility(&model.env, &model.generative, &model.primitives)?;
    match report.violations.first() {
        None => Ok(()),
        Some(Violation::Plant { k, state, action, next }) => Err(Error::Infeasible {
            k: *k,
            state: *state,
            action: *action,
            reason: format!("plant puts mass on next state {next} where the reference plant has none"),
        }),
        Some(Violation::Primitive { k, primitive, state, action }) => Err(Error::Infeasible {
            k: *k,
            state: *state,
            action: *action,
            reason: format!("primitive {primitive} puts mass where the reference policy has none"),
        }),
    }
}

/// Exact finite-horizon recursion. Fails with [`Error::NotConverged`] listing
/// every `(k, x)` whose solve missed the tolerance at the first step where any did.
pub fn backward_recursion(model: &Model, horizon: usize, opts: &SolverOptions) -> Result<Plan> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    if let Some(limit) = model.horizon_limit() {
        if horizon > limit {
            return Err(Error::Config(format!(
                "horizon {horizon} exceeds the {limit} steps covered by the model tables"
            )));
        }
    }
    feasibility_error(model)?;

    let ns = model.n_states();
    let mut values = vec![vec![0.0; ns]; horizon + 1];
    let mut weights = vec![Vec::new(); horizon];
    for k in (1..=horizon).rev() {
        let next = &values[k];
        let reports: Vec<Result<SolveReport>> = (0..ns)
            .into_par_iter()
            .map(|x| {
                let sp = build_step_problem(model, k, x, Continuation::Values(next))?;
                Ok(solve(&sp, opts))
            })
            .collect();
        let mut step_values = Vec::with_capacity(ns);
        let mut step_weights = Vec::with_capacity(ns);
        let mut failures = Vec::new();
        for (x, r) in reports.into_iter().enumerate() {
            let r = r?;
            if !r.converged {
                failures.push((k, x));
            }
            step_values.push(r.objective);
            step_weights.push(r.weights);
        }
        if !failures.is_empty() {
            return Err(Error::NotConverged { failures });
        }
        values[k - 1] = step_values;
        weights[k - 1] = step_weights;
    }
    Ok(Plan {
        value_table: ValueTable { values },
        policy_table: PolicyTable { weights },
        horizon,
    })
}

/// `h(x, u) = Σ_x' p(x'|u,x) Σ_x'' p(x''|u,x') c^x(x'')`: expected state cost
/// after applying `u` twice from `x`. Both transitions use the step-`k` tables.
pub fn heuristic_cost_to_go(model: &Model, k: usize, x: usize, u: usize) -> f64 {
    let cost = model.costs.state_cost(k);
    model
        .env
        .row(k, x, u)
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(x1, &p)| p * dot(model.env.row(k, x1, u), cost))
        .sum()
}

/// `h(x, u)` for every state and action, laid out as `x * n_actions + u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookaheadTable {
    n_states: usize,
    n_actions: usize,
    data: Vec<f64>,
}

impl LookaheadTable {
    /// Precomputes `h` through the one-step expectation `e(x', u) = Σ p(x''|u,x') c(x'')`.
    pub fn build(model: &Model, k: usize) -> Self {
        let ns = model.n_states();
        let na = model.n_actions();
        let cost = model.costs.state_cost(k);
        let mut once = vec![0.0; ns * na];
        once.par_chunks_mut(na).enumerate().for_each(|(x1, row)| {
            for (u, e) in row.iter_mut().enumerate() {
                *e = dot(model.env.row(k, x1, u), cost);
            }
        });
        let mut data = vec![0.0; ns * na];
        data.par_chunks_mut(na).enumerate().for_each(|(x, row)| {
            for (u, h) in row.iter_mut().enumerate() {
                *h = model
                    .env
                    .row(k, x, u)
                    .iter()
                    .enumerate()
                    .map(|(x1, &p)| p * once[x1 * na + u])
                    .sum();
            }
        });
        Self { n_states: ns, n_actions: na, data }
    }

    /// All-zero continuation, which turns the greedy step into the `N = 1` problem.
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions, data: vec![0.0; n_states * n_actions] }
    }

    pub fn from_data(n_states: usize, n_actions: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_states * n_actions {
            return Err(Error::DimensionMismatch {
                what: "lookahead table",
                expected: n_states * n_actions,
                got: data.len(),
            });
        }
        Ok(Self { n_states, n_actions, data })
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.data[x * self.n_actions..(x + 1) * self.n_actions]
    }

    pub fn get(&self, x: usize, u: usize) -> f64 {
        self.data[x * self.n_actions + u]
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
}

/// Solves the one-step problem at `x` with `lookahead(x, ·)` as continuation.
pub fn greedy_solve(model: &Model, k: usize, x: usize, lookahead: &LookaheadTable, opts: &SolverOptions) -> Result<SolveReport> {
    if x >= model.n_states() {
        return Err(Error::DimensionMismatch { what: "state index bound", expected: model.n_states(), got: x });
    }
    let sp = build_step_problem(model, k, x, Continuation::PerAction(lookahead.row(x)))?;
    let r = solve(&sp, opts);
    if !r.converged {
        return Err(Error::NotConverged { failures: vec![(k, x)] });
    }
    Ok(r)
}

/// Greedy weights at `x` and the mixed policy they induce.
pub fn greedy_step(
    model: &Model,
    k: usize,
    x: usize,
    lookahead: &LookaheadTable,
    opts: &SolverOptions,
) -> Result<(Weights, FiniteDistribution)> {
    let r = greedy_solve(model, k, x, lookahead, opts)?;
    let policy = mix_policy(&model.primitives, k, x, &r.weights)?;
    Ok((r.weights, policy))
}
