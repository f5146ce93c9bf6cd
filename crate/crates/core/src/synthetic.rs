//! Random tabular instances for property checks, oracle suites and examples.

use std::sync::Arc;

use crate::gating::StepProblem;
use crate::model::{CostModel, EnvironmentKernel, GenerativeModel, Model, PrimitiveSet, RowTable, Schedule, Weights};
use crate::prob::{apply_floor, FiniteDistribution, Grid, RngStream};

/// A Dirichlet(1, ..., 1) draw, i.e. a uniform point of the simplex.
pub fn random_simplex_point(rng: &mut RngStream, n: usize) -> Weights {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.uniform()).ln()).collect();
    let total: f64 = raw.iter().sum();
    Weights::from_raw_unchecked(raw.iter().map(|r| r / total).collect())
}

/// A random probability vector whose entries are spread over several orders of
/// magnitude, floored at `floor`.
pub fn random_pmf(rng: &mut RngStream, n: usize, floor: f64) -> Vec<f64> {
    let mut raw: Vec<f64> = (0..n)
        .map(|_| {
            let e = -(1.0 - rng.uniform()).ln();
            e * e * e
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter_mut().for_each(|r| *r /= total);
    apply_floor(&mut raw, floor);
    raw
}

fn random_rows(rng: &mut RngStream, rows: usize, len: usize, floor: f64) -> RowTable {
    let data: Vec<f64> = (0..rows).flat_map(|_| random_pmf(rng, len, floor)).collect();
    RowTable::from_data(rows, len, data).expect("random rows are normalized")
}

/// A stationary tabular model on indexed grids with random kernels, reference
/// model, primitives and state costs in `[0, 5)`.
pub fn random_model(n_states: usize, n_actions: usize, n_prims: usize, seed: u64, floor: f64) -> Model {
    let mut rng = RngStream::new(seed, 0xfeed);
    let sg = Arc::new(Grid::indexed(n_states).expect("positive state count"));
    let ag = Arc::new(Grid::indexed(n_actions).expect("positive action count"));
    let env = EnvironmentKernel::new(
        sg.clone(),
        ag.clone(),
        Schedule::Stationary(random_rows(&mut rng, n_states * n_actions, n_states, floor)),
    )
    .expect("shapes match");
    let refk = EnvironmentKernel::new(
        sg.clone(),
        ag.clone(),
        Schedule::Stationary(random_rows(&mut rng, n_states * n_actions, n_states, floor)),
    )
    .expect("shapes match");
    let rho = random_rows(&mut rng, n_states, n_actions, floor);
    let prior = FiniteDistribution::new(sg.clone(), random_pmf(&mut rng, n_states, floor)).expect("normalized");
    let generative = GenerativeModel::new(refk, Schedule::Stationary(rho), prior).expect("shapes match");
    let prims = (0..n_prims)
        .map(|_| random_rows(&mut rng, n_states, n_actions, floor))
        .collect();
    let primitives = PrimitiveSet::new(ag, n_states, Schedule::Stationary(prims)).expect("shapes match");
    let state_cost: Vec<f64> = (0..n_states).map(|_| 5.0 * rng.uniform()).collect();
    let costs = CostModel::stationary(state_cost, n_actions).expect("finite costs");
    Model::new(env, generative, costs, primitives).expect("consistent model")
}

/// A random step problem with full-support primitive columns, a random reference
/// policy and action scores in `[0, 3)`.
pub fn random_step_problem(rng: &mut RngStream, n_actions: usize, n_prims: usize) -> StepProblem {
    let cols: Vec<Vec<f64>> = (0..n_prims).map(|_| random_pmf(rng, n_actions, 1e-12)).collect();
    let rho = random_pmf(rng, n_actions, 1e-12);
    let d: Vec<f64> = (0..n_actions).map(|_| 3.0 * rng.uniform()).collect();
    StepProblem::new(&cols, rho, d).expect("random step problem is valid")
}
