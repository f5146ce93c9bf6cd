//! Environment kernel, generative model, costs and primitives.
//!
//! All tables are dense and indexed by flat grid indices. Anything that may vary
//! over time is wrapped in a [`Schedule`]; the stationary variant shares one table
//! across every step. Steps are numbered from 1, matching the convention that the
//! action at step `k` moves the system from `x_{k-1}` to `x_k`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{validate_probs, FiniteDistribution, Grid, DEFAULT_FLOOR};

/// A value that is either shared across all steps or given per step.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule<T> {
    Stationary(T),
    PerStep(Vec<T>),
}

impl<T> Schedule<T> {
    /// Value at step `k` (1-based). Panics if a per-step schedule is too short;
    /// [`Model::horizon_limit`] reports how far a model can be planned.
    pub fn at(&self, k: usize) -> &T {
        match self {
            Schedule::Stationary(v) => v,
            Schedule::PerStep(vs) => {
                assert!(k >= 1 && k <= vs.len(), "step {k} outside schedule of {}", vs.len());
                &vs[k - 1]
            }
        }
    }

    pub fn steps(&self) -> Option<usize> {
        match self {
            Schedule::Stationary(_) => None,
            Schedule::PerStep(vs) => Some(vs.len()),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &T)> {
        let items: Vec<&T> = match self {
            Schedule::Stationary(v) => vec![v],
            Schedule::PerStep(vs) => vs.iter().collect(),
        };
        items.into_iter().enumerate().map(|(i, v)| (i + 1, v))
    }

    fn try_for_each(&self, mut f: impl FnMut(&T) -> Result<()>) -> Result<()> {
        match self {
            Schedule::Stationary(v) => f(v),
            Schedule::PerStep(vs) => vs.iter().try_for_each(f),
        }
    }
}

/// Dense table of probability rows, all of the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct RowTable {
    rows: usize,
    row_len: usize,
    data: Vec<f64>,
}

impl RowTable {
    /// Wraps row-major data, validating that every row is a probability vector.
    pub fn from_data(rows: usize, row_len: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * row_len {
            return Err(Error::DimensionMismatch {
                what: "row table data",
                expected: rows * row_len,
                got: data.len(),
            });
        }
        for (r, row) in data.chunks(row_len).enumerate() {
            validate_probs(row, row_len).map_err(|e| {
                Error::InvalidDistribution(format!("row {r}: {e}"))
            })?;
        }
        Ok(Self { rows, row_len, data })
    }

    /// Fills every row in parallel with `fill(row_index, row)`.
    pub fn build<F>(rows: usize, row_len: usize, fill: F) -> Result<Self>
    where
        F: Fn(usize, &mut [f64]) -> Result<()> + Sync,
    {
        let mut data = vec![0.0; rows * row_len];
        data.par_chunks_mut(row_len.max(1))
            .enumerate()
            .try_for_each(|(r, row)| fill(r, row))?;
        Self::from_data(rows, row_len, data)
    }

    pub fn from_distributions(rows: &[FiniteDistribution]) -> Result<Self> {
        let row_len = rows.first().map_or(0, |d| d.len());
        let mut data = Vec::with_capacity(rows.len() * row_len);
        for d in rows {
            if d.len() != row_len {
                return Err(Error::DimensionMismatch {
                    what: "row length",
                    expected: row_len,
                    got: d.len(),
                });
            }
            data.extend_from_slice(d.probs());
        }
        Ok(Self {
            rows: rows.len(),
            row_len,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn row_len(&self) -> usize {
        self.row_len
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.row_len..(r + 1) * self.row_len]
    }
}

/// Transition probabilities `p(x' | u, x)`, one row per `(x, u)` pair.
#[derive(Debug, Clone)]
pub struct EnvironmentKernel {
    state_grid: Arc<Grid>,
    action_grid: Arc<Grid>,
    tables: Schedule<RowTable>,
}

impl EnvironmentKernel {
    pub fn new(
        state_grid: Arc<Grid>,
        action_grid: Arc<Grid>,
        tables: Schedule<RowTable>,
    ) -> Result<Self> {
        let ns = state_grid.flat_size();
        let na = action_grid.flat_size();
        tables.try_for_each(|t| {
            if t.rows() != ns * na || t.row_len() != ns {
                return Err(Error::DimensionMismatch {
                    what: "kernel table (rows x row length)",
                    expected: ns * na * ns,
                    got: t.rows() * t.row_len(),
                });
            }
            Ok(())
        })?;
        Ok(Self {
            state_grid,
            action_grid,
            tables,
        })
    }

    /// Builds a stationary kernel by filling each `(x, u)` row.
    pub fn stationary_from_fn<F>(state_grid: Arc<Grid>, action_grid: Arc<Grid>, fill: F) -> Result<Self>
    where
        F: Fn(usize, usize, &mut [f64]) -> Result<()> + Sync,
    {
        let ns = state_grid.flat_size();
        let na = action_grid.flat_size();
        let table = RowTable::build(ns * na, ns, |r, row| fill(r / na, r % na, row))?;
        Self::new(state_grid, action_grid, Schedule::Stationary(table))
    }

    pub fn row(&self, k: usize, x: usize, u: usize) -> &[f64] {
        self.tables
            .at(k)
            .row(x * self.action_grid.flat_size() + u)
    }

    pub fn state_grid(&self) -> &Arc<Grid> {
        &self.state_grid
    }

    pub fn action_grid(&self) -> &Arc<Grid> {
        &self.action_grid
    }

    pub fn is_stationary(&self) -> bool {
        matches!(self.tables, Schedule::Stationary(_))
    }

    pub fn steps(&self) -> Option<usize> {
        self.tables.steps()
    }

    pub fn n_states(&self) -> usize {
        self.state_grid.flat_size()
    }

    pub fn n_actions(&self) -> usize {
        self.action_grid.flat_size()
    }
}

/// Per-state action distributions, one row per state.
pub type PolicyRows = RowTable;

/// Reference plant `q(x'|u,x)`, reference policy `ρ(u|x)` and initial prior `q(x_0)`.
#[derive(Debug, Clone)]
pub struct GenerativeModel {
    ref_kernel: EnvironmentKernel,
    ref_policy: Schedule<PolicyRows>,
    initial_prior: FiniteDistribution,
}

impl GenerativeModel {
    pub fn new(
        ref_kernel: EnvironmentKernel,
        ref_policy: Schedule<PolicyRows>,
        initial_prior: FiniteDistribution,
    ) -> Result<Self> {
        let ns = ref_kernel.n_states();
        let na = ref_kernel.n_actions();
        ref_policy.try_for_each(|t| {
            if t.rows() != ns || t.row_len() != na {
                return Err(Error::DimensionMismatch {
                    what: "reference policy table",
                    expected: ns * na,
                    got: t.rows() * t.row_len(),
                });
            }
            Ok(())
        })?;
        if **initial_prior.grid() != **ref_kernel.state_grid() {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            ref_kernel,
            ref_policy,
            initial_prior,
        })
    }

    pub fn ref_kernel(&self) -> &EnvironmentKernel {
        &self.ref_kernel
    }

    pub fn ref_policy_row(&self, k: usize, x: usize) -> &[f64] {
        self.ref_policy.at(k).row(x)
    }

    pub fn ref_policy(&self) -> &Schedule<PolicyRows> {
        &self.ref_policy
    }

    pub fn initial_prior(&self) -> &FiniteDistribution {
        &self.initial_prior
    }
}

/// State cost `c^x_k` over states and action cost `c^u_k` over actions.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    state_cost: Schedule<Vec<f64>>,
    action_cost: Schedule<Vec<f64>>,
}

impl CostModel {
    pub fn new(state_cost: Schedule<Vec<f64>>, action_cost: Schedule<Vec<f64>>) -> Result<Self> {
        let finite = |v: &Vec<f64>| {
            if v.iter().all(|c| c.is_finite()) {
                Ok(())
            } else {
                Err(Error::Config("costs must be finite".into()))
            }
        };
        state_cost.try_for_each(finite)?;
        action_cost.try_for_each(finite)?;
        Ok(Self {
            state_cost,
            action_cost,
        })
    }

    /// Stationary costs; the action cost defaults to zero.
    pub fn stationary(state_cost: Vec<f64>, n_actions: usize) -> Result<Self> {
        Self::new(
            Schedule::Stationary(state_cost),
            Schedule::Stationary(vec![0.0; n_actions]),
        )
    }

    pub fn state_cost(&self, k: usize) -> &[f64] {
        self.state_cost.at(k)
    }

    pub fn action_cost(&self, k: usize) -> &[f64] {
        self.action_cost.at(k)
    }

    pub fn state_schedule(&self) -> &Schedule<Vec<f64>> {
        &self.state_cost
    }

    pub fn action_schedule(&self) -> &Schedule<Vec<f64>> {
        &self.action_cost
    }

    /// Returns a copy with `shift` added to every state cost at step `k`.
    /// A stationary schedule is expanded to `horizon` steps first.
    pub fn with_state_shift(&self, k: usize, shift: f64, horizon: usize) -> Self {
        let mut per_step: Vec<Vec<f64>> = (1..=horizon).map(|j| self.state_cost(j).to_vec()).collect();
        per_step[k - 1].iter_mut().for_each(|c| *c += shift);
        Self {
            state_cost: Schedule::PerStep(per_step),
            action_cost: self.action_cost.clone(),
        }
    }
}

/// Control primitives `π^(i)(u|x)`; each primitive is a [`PolicyRows`] table.
#[derive(Debug, Clone)]
pub struct PrimitiveSet {
    action_grid: Arc<Grid>,
    n_states: usize,
    primitives: Schedule<Vec<PolicyRows>>,
}

impl PrimitiveSet {
    pub fn new(
        action_grid: Arc<Grid>,
        n_states: usize,
        primitives: Schedule<Vec<PolicyRows>>,
    ) -> Result<Self> {
        let na = action_grid.flat_size();
        let mut count = None;
        primitives.try_for_each(|set| {
            if set.is_empty() {
                return Err(Error::Config("at least one primitive is required".into()));
            }
            if *count.get_or_insert(set.len()) != set.len() {
                return Err(Error::Config(
                    "every step must carry the same number of primitives".into(),
                ));
            }
            for t in set {
                if t.rows() != n_states || t.row_len() != na {
                    return Err(Error::DimensionMismatch {
                        what: "primitive table",
                        expected: n_states * na,
                        got: t.rows() * t.row_len(),
                    });
                }
                // Bounded: a pmf entry can never exceed one.
                if t.data.iter().any(|&p| p > 1.0) {
                    return Err(Error::InvalidDistribution(
                        "primitive probabilities must not exceed 1".into(),
                    ));
                }
            }
            Ok(())
        })?;
        Ok(Self {
            action_grid,
            n_states,
            primitives,
        })
    }

    /// Stationary set built from per-primitive, per-state action distributions.
    pub fn stationary(action_grid: Arc<Grid>, rows: Vec<Vec<FiniteDistribution>>) -> Result<Self> {
        let n_states = rows.first().map_or(0, |r| r.len());
        let tables = rows
            .iter()
            .map(|r| RowTable::from_distributions(r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(action_grid, n_states, Schedule::Stationary(tables))
    }

    pub fn len(&self) -> usize {
        self.primitives.at(1).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Full table of primitive `i` at step `k`.
    pub fn table(&self, k: usize, i: usize) -> &PolicyRows {
        &self.primitives.at(k)[i]
    }

    pub fn row(&self, k: usize, i: usize, x: usize) -> &[f64] {
        self.primitives.at(k)[i].row(x)
    }

    pub fn action_grid(&self) -> &Arc<Grid> {
        &self.action_grid
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn steps(&self) -> Option<usize> {
        self.primitives.steps()
    }

    /// Returns a set containing only primitive `i`.
    pub fn single(&self, i: usize) -> Self {
        let primitives = match &self.primitives {
            Schedule::Stationary(v) => Schedule::Stationary(vec![v[i].clone()]),
            Schedule::PerStep(vs) => Schedule::PerStep(vs.iter().map(|v| vec![v[i].clone()]).collect()),
        };
        Self {
            action_grid: self.action_grid.clone(),
            n_states: self.n_states,
            primitives,
        }
    }
}

/// Tolerance on `Σ w = 1` for a point of the probability simplex.
pub const SIMPLEX_TOLERANCE: f64 = 1e-10;

/// Mixing weights on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Weights(Vec<f64>);

impl Weights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::NotOnSimplex("empty weight vector".into()));
        }
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::NotOnSimplex(format!("negative or non-finite entry in {w:?}")));
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::NotOnSimplex(format!("entries sum to {total}")));
        }
        Ok(Self(w))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    /// The simplex vertex `e_i`.
    pub fn vertex(n: usize, i: usize) -> Self {
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        Self(w)
    }

    pub(crate) fn from_raw_unchecked(w: Vec<f64>) -> Self {
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for Weights {
    type Error = Error;

    fn try_from(w: Vec<f64>) -> Result<Self> {
        Self::new(w)
    }
}

impl From<Weights> for Vec<f64> {
    fn from(w: Weights) -> Self {
        w.0
    }
}

/// Pointwise convex combination `Σ_i w_i π^(i)(·|x)` at step `k`.
pub fn mix_policy(prims: &PrimitiveSet, k: usize, x: usize, w: &Weights) -> Result<FiniteDistribution> {
    if w.len() != prims.len() {
        return Err(Error::DimensionMismatch {
            what: "weights vs primitives",
            expected: prims.len(),
            got: w.len(),
        });
    }
    if x >= prims.n_states() {
        return Err(Error::DimensionMismatch {
            what: "state index bound",
            expected: prims.n_states(),
            got: x,
        });
    }
    let mut mixed = vec![0.0; prims.action_grid().flat_size()];
    for (i, &wi) in w.as_slice().iter().enumerate() {
        if wi == 0.0 {
            continue;
        }
        for (m, &p) in mixed.iter_mut().zip(prims.row(k, i, x)) {
            *m += wi * p;
        }
    }
    FiniteDistribution::new(prims.action_grid().clone(), mixed)
}

/// A full problem instance: what the gating recursion consumes.
#[derive(Debug, Clone)]
pub struct Model {
    pub env: EnvironmentKernel,
    pub generative: GenerativeModel,
    pub costs: CostModel,
    pub primitives: PrimitiveSet,
}

impl Model {
    pub fn new(
        env: EnvironmentKernel,
        generative: GenerativeModel,
        costs: CostModel,
        primitives: PrimitiveSet,
    ) -> Result<Self> {
        if **env.state_grid() != **generative.ref_kernel().state_grid()
            || **env.action_grid() != **generative.ref_kernel().action_grid()
            || **env.action_grid() != **primitives.action_grid()
        {
            return Err(Error::GridMismatch);
        }
        if primitives.n_states() != env.n_states() {
            return Err(Error::DimensionMismatch {
                what: "primitive states",
                expected: env.n_states(),
                got: primitives.n_states(),
            });
        }
        let ns = env.n_states();
        let na = env.n_actions();
        costs.state_schedule().try_for_each(|c| expect_len("state cost", ns, c.len()))?;
        costs.action_schedule().try_for_each(|c| expect_len("action cost", na, c.len()))?;
        Ok(Self {
            env,
            generative,
            costs,
            primitives,
        })
    }

    pub fn n_states(&self) -> usize {
        self.env.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.env.n_actions()
    }

    pub fn n_primitives(&self) -> usize {
        self.primitives.len()
    }

    pub fn state_grid(&self) -> &Arc<Grid> {
        self.env.state_grid()
    }

    pub fn action_grid(&self) -> &Arc<Grid> {
        self.env.action_grid()
    }

    /// Longest horizon the per-step tables support (`None` if everything is stationary).
    pub fn horizon_limit(&self) -> Option<usize> {
        [
            self.env.steps(),
            self.generative.ref_kernel().steps(),
            self.generative.ref_policy().steps(),
            self.costs.state_schedule().steps(),
            self.costs.action_schedule().steps(),
            self.primitives.steps(),
        ]
        .into_iter()
        .flatten()
        .min()
    }

    /// Same model with primitive `i` as the only primitive.
    pub fn with_single_primitive(&self, i: usize) -> Self {
        Self {
            primitives: self.primitives.single(i),
            ..self.clone()
        }
    }
}

fn expect_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { what, expected, got });
    }
    Ok(())
}

/// One absolute-continuity failure found by [`check_feasibility`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    /// `p(x'|u,x) > 0` where `q(x'|u,x) = 0`.
    Plant { k: usize, state: usize, action: usize, next: usize },
    /// `π^(i)(u|x) > 0` where `ρ(u|x) = 0`.
    Primitive { k: usize, primitive: usize, state: usize, action: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
    /// Entries sitting at floor level (positive but below ten times the default floor).
    pub floor_level_entries: usize,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that every plant row is absolutely continuous with respect to the
/// matching reference row, and every primitive with respect to the reference policy.
pub fn check_feasibility(
    env: &EnvironmentKernel,
    generative: &GenerativeModel,
    prims: &PrimitiveSet,
) -> Result<FeasibilityReport> {
    let refk = generative.ref_kernel();
    if **env.state_grid() != **refk.state_grid()
        || **env.action_grid() != **refk.action_grid()
        || **env.action_grid() != **prims.action_grid()
    {
        return Err(Error::GridMismatch);
    }
    if prims.n_states() != env.n_states() {
        return Err(Error::GridMismatch);
    }
    let near_floor = |p: f64| p > 0.0 && p < 10.0 * DEFAULT_FLOOR;
    let steps = [env.steps(), refk.steps(), generative.ref_policy().steps(), prims.steps()]
        .into_iter()
        .flatten()
        .min()
        .unwrap_or(1);
    let ns = env.n_states();
    let na = env.n_actions();
    let mut violations = Vec::new();
    let mut floor_level_entries = 0;
    for k in 1..=steps {
        for x in 0..ns {
            for u in 0..na {
                let p = env.row(k, x, u);
                let q = refk.row(k, x, u);
                for (next, (&pv, &qv)) in p.iter().zip(q).enumerate() {
                    if pv > 0.0 && qv == 0.0 {
                        violations.push(Violation::Plant { k, state: x, action: u, next });
                    }
                    floor_level_entries += near_floor(pv) as usize + near_floor(qv) as usize;
                }
            }
            let rho = generative.ref_policy_row(k, x);
            floor_level_entries += rho.iter().filter(|&&r| near_floor(r)).count();
            for i in 0..prims.len() {
                for (u, (&pv, &rv)) in prims.row(k, i, x).iter().zip(rho).enumerate() {
                    if pv > 0.0 && rv == 0.0 {
                        violations.push(Violation::Primitive { k, primitive: i, state: x, action: u });
                    }
                    floor_level_entries += near_floor(pv) as usize;
                }
            }
        }
    }
    Ok(FeasibilityReport {
        violations,
        floor_level_entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::random_model;

    #[test]
    fn singleton_mixture_returns_the_primitive() {
        let model = random_model(3, 4, 1, 5, 1e-12);
        for x in 0..3 {
            let mixed = mix_policy(&model.primitives, 1, x, &Weights::vertex(1, 0)).unwrap();
            assert_eq!(mixed.probs(), model.primitives.row(1, 0, x));
        }
    }

    #[test]
    fn identical_primitives_mix_to_themselves() {
        let base = random_model(2, 5, 1, 8, 1e-12);
        let t = base.primitives.primitives.at(1)[0].clone();
        let twin = PrimitiveSet::new(
            base.primitives.action_grid().clone(),
            2,
            Schedule::Stationary(vec![t.clone(), t]),
        )
        .unwrap();
        let w = Weights::new(vec![0.37, 0.63]).unwrap();
        for x in 0..2 {
            let mixed = mix_policy(&twin, 1, x, &w).unwrap();
            for (a, b) in mixed.probs().iter().zip(twin.row(1, 0, x)) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mixture_matches_elementwise_recomputation() {
        let model = random_model(4, 6, 2, 21, 1e-12);
        let w = Weights::new(vec![0.3, 0.7]).unwrap();
        for x in 0..4 {
            let mixed = mix_policy(&model.primitives, 1, x, &w).unwrap();
            for u in 0..6 {
                let oracle = 0.3 * model.primitives.row(1, 0, x)[u] + 0.7 * model.primitives.row(1, 1, x)[u];
                assert!((mixed.probs()[u] - oracle).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mix_rejects_wrong_weight_length() {
        let model = random_model(2, 3, 2, 3, 1e-12);
        assert!(mix_policy(&model.primitives, 1, 0, &Weights::uniform(3)).is_err());
    }

    #[test]
    fn weights_validation() {
        assert!(Weights::new(vec![0.5, 0.5]).is_ok());
        assert!(Weights::new(vec![0.5, 0.6]).is_err());
        assert!(Weights::new(vec![-0.1, 1.1]).is_err());
        assert!(Weights::new(vec![]).is_err());
        let parsed: std::result::Result<Weights, _> = serde_json::from_str("[0.2, 0.9]");
        assert!(parsed.is_err());
    }

    #[test]
    fn floored_models_are_feasible() {
        let model = random_model(3, 4, 2, 9, 1e-12);
        let report = check_feasibility(&model.env, &model.generative, &model.primitives).unwrap();
        assert!(report.is_feasible());
    }

    #[test]
    fn hard_zero_in_reference_policy_is_reported() {
        let model = random_model(3, 4, 2, 10, 1e-12);
        let ns = 3;
        let na = 4;
        let mut data = Vec::new();
        for x in 0..ns {
            let mut row = model.generative.ref_policy_row(1, x).to_vec();
            if x == 1 {
                row[2] = 0.0;
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|r| *r /= s);
            }
            data.extend(row);
        }
        let gen = GenerativeModel::new(
            model.generative.ref_kernel().clone(),
            Schedule::Stationary(RowTable::from_data(ns, na, data).unwrap()),
            model.generative.initial_prior().clone(),
        )
        .unwrap();
        let report = check_feasibility(&model.env, &gen, &model.primitives).unwrap();
        assert!(!report.is_feasible());
        assert!(report
            .violations
            .iter()
            .all(|v| matches!(v, Violation::Primitive { state: 1, action: 2, .. })));
        assert_eq!(report.violations.len(), 2);
    }

    #[test]
    fn feasibility_rejects_grid_mismatch() {
        let a = random_model(3, 4, 2, 1, 1e-12);
        let b = random_model(3, 5, 2, 1, 1e-12);
        assert_eq!(
            check_feasibility(&a.env, &a.generative, &b.primitives),
            Err(Error::GridMismatch)
        );
    }

    #[test]
    fn per_step_schedule_indexing() {
        let s = Schedule::PerStep(vec![10, 20, 30]);
        assert_eq!(*s.at(1), 10);
        assert_eq!(*s.at(3), 30);
        assert_eq!(s.steps(), Some(3));
        let st = Schedule::Stationary(5);
        assert_eq!(*st.at(99), 5);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn mixture_is_normalized_and_affine(seed in 0u64..500, a in 0.0f64..1.0,
                                                r1 in prop::collection::vec(0.01f64..1.0, 3),
                                                r2 in prop::collection::vec(0.01f64..1.0, 3)) {
                let model = random_model(2, 7, 3, seed, 1e-12);
                let norm = |r: Vec<f64>| { let s: f64 = r.iter().sum(); Weights::new(r.iter().map(|v| v / s).collect()).unwrap() };
                let w1 = norm(r1);
                let w2 = norm(r2);
                let blend = Weights::from_raw_unchecked(
                    w1.as_slice().iter().zip(w2.as_slice()).map(|(p, q)| a * p + (1.0 - a) * q).collect());
                for x in 0..2 {
                    let m1 = mix_policy(&model.primitives, 1, x, &w1).unwrap();
                    let m2 = mix_policy(&model.primitives, 1, x, &w2).unwrap();
                    let mb = mix_policy(&model.primitives, 1, x, &blend).unwrap();
                    prop_assert!((mb.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                    for u in 0..7 {
                        let lin = a * m1.probs()[u] + (1.0 - a) * m2.probs()[u];
                        prop_assert!((mb.probs()[u] - lin).abs() <= 1e-12);
                    }
                }
            }
        }
    }
}
