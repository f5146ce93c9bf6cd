//! Free-energy gating for a single `(k, x)` pair.
//!
//! With `m = Π w` the mixed action distribution, the per-step free energy is
//!
//! ```text
//! J(w) = Σ_u m(u) · ( ln(m(u)/ρ(u)) + d(u) )
//! d(u) = KL(p(·|u,x) ‖ q(·|u,x)) + c^u(u) + Σ_x' p(x'|u,x) · (c^x(x') + l(x'))
//! ```
//!
//! which is the KL chain rule applied to the joint `p(x',u) = m(u) p(x'|u,x)`
//! against `q(x',u) = ρ(u) q(x'|u,x)`, plus the expected `c̄`. Everything inside
//! `d` is independent of `w`, so each objective evaluation is a single sum over
//! actions.
//!
//! The solver is entropic mirror descent (exponentiated gradient). `J` is
//! 1-smooth relative to the negative entropy on the simplex, so a unit step
//! always decreases it; the step is grown while a sufficient-decrease test
//! passes and halved when it fails. Newton steps on the support face, using
//! the exact Hessian, give fast local convergence. The Frank–Wolfe gap `g·w − min_j g_j`
//! bounds `J(w) − J*` and is the stopping certificate.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, Weights};
use crate::prob::{argmax, dot, kl_slices};

/// Data of one per-step gating problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepProblem {
    n_actions: usize,
    n_prims: usize,
    /// `Π[u][i]`, row-major with one row per action.
    prim_matrix: Vec<f64>,
    ref_policy: Vec<f64>,
    action_score: Vec<f64>,
}

impl StepProblem {
    /// Builds a problem from one action distribution per primitive, the
    /// reference policy row and the action scores `d(u)`.
    pub fn new(primitives: &[Vec<f64>], ref_policy: Vec<f64>, action_score: Vec<f64>) -> Result<Self> {
        let n_prims = primitives.len();
        if n_prims == 0 {
            return Err(Error::Config("a step problem needs at least one primitive".into()));
        }
        let n_actions = ref_policy.len();
        for col in primitives {
            if col.len() != n_actions {
                return Err(Error::DimensionMismatch {
                    what: "primitive column",
                    expected: n_actions,
                    got: col.len(),
                });
            }
            crate::prob::validate_probs(col, n_actions)?;
        }
        crate::prob::validate_probs(&ref_policy, n_actions)?;
        if action_score.len() != n_actions {
            return Err(Error::DimensionMismatch {
                what: "action score",
                expected: n_actions,
                got: action_score.len(),
            });
        }
        if let Some(u) = action_score.iter().position(|d| !d.is_finite()) {
            return Err(Error::Infeasible {
                k: 0,
                state: 0,
                action: u,
                reason: "action score is not finite".into(),
            });
        }
        let mut prim_matrix = vec![0.0; n_actions * n_prims];
        for (i, col) in primitives.iter().enumerate() {
            for (u, &p) in col.iter().enumerate() {
                prim_matrix[u * n_prims + i] = p;
            }
        }
        Ok(Self {
            n_actions,
            n_prims,
            prim_matrix,
            ref_policy,
            action_score,
        })
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_prims(&self) -> usize {
        self.n_prims
    }

    /// `Π[u][i]`.
    pub fn prim(&self, u: usize, i: usize) -> f64 {
        self.prim_matrix[u * self.n_prims + i]
    }

    pub fn primitive_column(&self, i: usize) -> Vec<f64> {
        (0..self.n_actions).map(|u| self.prim(u, i)).collect()
    }

    pub fn ref_policy(&self) -> &[f64] {
        &self.ref_policy
    }

    pub fn action_score(&self) -> &[f64] {
        &self.action_score
    }

    /// Mixed action distribution `m = Π w`.
    pub fn mixture(&self, w: &[f64]) -> Vec<f64> {
        self.prim_matrix
            .chunks(self.n_prims)
            .map(|row| dot(row, w))
            .collect()
    }

    fn objective_from_mixture(&self, m: &[f64]) -> f64 {
        m.iter()
            .zip(&self.ref_policy)
            .zip(&self.action_score)
            .filter(|((&mu, _), _)| mu > 0.0)
            .map(|((&mu, &rho), &d)| mu * ((mu / rho).ln() + d))
            .sum()
    }

    fn gradient_from_mixture(&self, m: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n_prims];
        for (u, row) in self.prim_matrix.chunks(self.n_prims).enumerate() {
            let s = (m[u] / self.ref_policy[u]).ln() + self.action_score[u] + 1.0;
            for (gi, &p) in g.iter_mut().zip(row) {
                *gi += p * s;
            }
        }
        g
    }
}

/// What the next step contributes to `d(u)`.
#[derive(Debug, Clone, Copy)]
pub enum Continuation<'a> {
    /// Exact cost-to-go `l_{k+1}` over next states; enters as `Σ p(x'|u,x) l(x')`.
    Values(&'a [f64]),
    /// A per-action continuation `h(x, u)` for the current state, added as is.
    PerAction(&'a [f64]),
}

/// Assembles the step problem at state `x`, step `k`.
pub fn build_step_problem(model: &Model, k: usize, x: usize, continuation: Continuation<'_>) -> Result<StepProblem> {
    let ns = model.n_states();
    let na = model.n_actions();
    match continuation {
        Continuation::Values(l) if l.len() != ns => {
            return Err(Error::DimensionMismatch { what: "next values", expected: ns, got: l.len() })
        }
        Continuation::PerAction(h) if h.len() != na => {
            return Err(Error::DimensionMismatch { what: "per-action continuation", expected: na, got: h.len() })
        }
        _ => {}
    }
    let state_cost = model.costs.state_cost(k);
    let action_cost = model.costs.action_cost(k);
    let rho = model.generative.ref_policy_row(k, x).to_vec();
    let refk = model.generative.ref_kernel();

    let mut next_loss = state_cost.to_vec();
    if let Continuation::Values(l) = continuation {
        if let Some(bad) = l.iter().position(|v| !v.is_finite()) {
            return Err(Error::Infeasible { k, state: x, action: 0, reason: format!("next value at state {bad} is not finite") });
        }
        next_loss.iter_mut().zip(l).for_each(|(c, v)| *c += v);
    }

    let mut score = Vec::with_capacity(na);
    for u in 0..na {
        let p = model.env.row(k, x, u);
        let plant_kl = kl_slices(p, refk.row(k, x, u));
        if !plant_kl.is_finite() {
            return Err(Error::Infeasible { k, state: x, action: u, reason: "plant is not absolutely continuous w.r.t. the reference plant".into() });
        }
        let mut d = plant_kl + action_cost[u] + dot(p, &next_loss);
        if let Continuation::PerAction(h) = continuation {
            d += h[u];
        }
        if !d.is_finite() {
            return Err(Error::Infeasible { k, state: x, action: u, reason: "action score is not finite".into() });
        }
        score.push(d);
    }

    let columns: Vec<Vec<f64>> = (0..model.n_primitives())
        .map(|i| model.primitives.row(k, i, x).to_vec())
        .collect();
    for (i, col) in columns.iter().enumerate() {
        if let Some(u) = col.iter().zip(&rho).position(|(&p, &r)| p > 0.0 && r == 0.0) {
            return Err(Error::Infeasible {
                k,
                state: x,
                action: u,
                reason: format!("primitive {i} is not absolutely continuous w.r.t. the reference policy"),
            });
        }
    }
    StepProblem::new(&columns, rho, score).map_err(|e| match e {
        Error::Infeasible { action, reason, .. } => Error::Infeasible { k, state: x, action, reason },
        other => other,
    })
}

fn check_weights(sp: &StepProblem, w: &Weights) {
    assert_eq!(w.len(), sp.n_prims, "weight vector length must equal the number of primitives");
}

/// Per-step free energy `J(w)`.
pub fn objective(sp: &StepProblem, w: &Weights) -> f64 {
    check_weights(sp, w);
    sp.objective_from_mixture(&sp.mixture(w.as_slice()))
}

/// `∂J/∂w_i = Σ_u Π[u][i] · (ln(m(u)/ρ(u)) + d(u) + 1)`.
pub fn gradient(sp: &StepProblem, w: &Weights) -> Vec<f64> {
    check_weights(sp, w);
    sp.gradient_from_mixture(&sp.mixture(w.as_slice()))
}

/// `∂²J/∂w_i∂w_j = Σ_u Π[u][i] Π[u][j] / m(u)`.
pub fn hessian(sp: &StepProblem, w: &Weights) -> DMatrix<f64> {
    check_weights(sp, w);
    let n = sp.n_prims;
    let m = sp.mixture(w.as_slice());
    let mut h = DMatrix::zeros(n, n);
    for (u, row) in sp.prim_matrix.chunks(n).enumerate() {
        if m[u] <= 0.0 {
            continue;
        }
        for i in 0..n {
            let a = row[i] / m[u];
            for j in i..n {
                h[(i, j)] += a * row[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            h[(i, j)] = h[(j, i)];
        }
    }
    h
}

/// Frank–Wolfe gap `max_j g·(w − e_j)`.
pub fn frank_wolfe_gap(w: &[f64], g: &[f64]) -> f64 {
    let gmin = g.iter().copied().fold(f64::INFINITY, f64::min);
    (dot(g, w) - gmin).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 5000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub weights: Weights,
    pub objective: f64,
    pub fw_gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

// Weights never drop below this, so every coordinate can still grow back.
const WEIGHT_FLOOR: f64 = 1e-30;
const MAX_STEP: f64 = 1e6;
/// Coordinates above this count as part of the current face for Newton steps.
const SUPPORT_THRESHOLD: f64 = 1e-15;

struct Iterate {
    w: Vec<f64>,
    m: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

impl Iterate {
    fn at(sp: &StepProblem, w: Vec<f64>) -> Self {
        let m = sp.mixture(&w);
        let f = sp.objective_from_mixture(&m);
        let g = sp.gradient_from_mixture(&m);
        Self { w, m, f, g }
    }
}

/// Minimizes `J` over the simplex, starting from the barycenter.
///
/// Each iteration first tries a Newton step restricted to the face spanned by
/// the current support, then an exponentiated-gradient step; the latter is the
/// one that can bring primitives back into the support.
pub fn solve(sp: &StepProblem, opts: &SolverOptions) -> SolveReport {
    let n = sp.n_prims;
    if n == 1 {
        let w = Weights::vertex(1, 0);
        let objective = objective(sp, &w);
        return SolveReport { weights: w, objective, fw_gap: 0.0, iterations: 0, converged: true };
    }

    let mut it_state = Iterate::at(sp, vec![1.0 / n as f64; n]);
    let mut step = 1.0;

    for it in 0..opts.max_iter {
        let gap = frank_wolfe_gap(&it_state.w, &it_state.g);
        if gap <= opts.tol {
            return SolveReport {
                weights: Weights::from_raw_unchecked(it_state.w),
                objective: it_state.f,
                fw_gap: gap,
                iterations: it,
                converged: true,
            };
        }
        if let Some(next) = newton_on_support(sp, &it_state) {
            it_state = next;
            if frank_wolfe_gap(&it_state.w, &it_state.g) <= opts.tol {
                continue;
            }
        }
        let (next, used) = mirror_step(sp, &it_state, step);
        if let Some(next) = next {
            it_state = next;
        }
        step = (used * 2.0).min(MAX_STEP);
    }

    let gap = frank_wolfe_gap(&it_state.w, &it_state.g);
    SolveReport {
        weights: Weights::from_raw_unchecked(it_state.w),
        objective: it_state.f,
        fw_gap: gap,
        iterations: opts.max_iter,
        converged: gap <= opts.tol,
    }
}

/// One exponentiated-gradient step with backtracking on the relative-smoothness
/// bound. Returns the accepted iterate (if it does not increase `J`) and the step used.
fn mirror_step(sp: &StepProblem, cur: &Iterate, mut step: f64) -> (Option<Iterate>, f64) {
    let n = cur.w.len();
    let gmin = cur.g.iter().copied().fold(f64::INFINITY, f64::min);
    let slack = 1e-14 * cur.f.abs().max(1.0);
    let mut cand = vec![0.0; n];
    loop {
        for i in 0..n {
            cand[i] = cur.w[i] * (-step * (cur.g[i] - gmin)).exp();
        }
        normalize_with_floor(&mut cand);
        let mc = sp.mixture(&cand);
        let fc = sp.objective_from_mixture(&mc);
        let linear: f64 = cur.g.iter().zip(cand.iter().zip(&cur.w)).map(|(gi, (c, wi))| gi * (c - wi)).sum();
        let bregman = kl_slices(&cand, &cur.w);
        if fc <= cur.f + linear + bregman / step + slack || step <= 1.0 {
            if fc <= cur.f + slack {
                let g = sp.gradient_from_mixture(&mc);
                return (Some(Iterate { w: cand, m: mc, f: fc, g }), step);
            }
            return (None, step);
        }
        step *= 0.5;
    }
}

/// Newton step on the face of the current support, with Armijo backtracking.
/// Coordinates that would cross zero are clipped to the floor and leave the face.
fn newton_on_support(sp: &StepProblem, cur: &Iterate) -> Option<Iterate> {
    let support: Vec<usize> = (0..cur.w.len()).filter(|&i| cur.w[i] > SUPPORT_THRESHOLD).collect();
    let s = support.len();
    if s < 2 {
        return None;
    }
    // KKT system [H 1; 1' 0] [v; λ] = [-g; 0] on the face.
    let mut kkt = DMatrix::<f64>::zeros(s + 1, s + 1);
    let mut rhs = nalgebra::DVector::<f64>::zeros(s + 1);
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate().skip(a) {
            let mut h = 0.0;
            for u in 0..sp.n_actions {
                if cur.m[u] > 0.0 {
                    h += sp.prim(u, i) * sp.prim(u, j) / cur.m[u];
                }
            }
            kkt[(a, b)] = h;
            kkt[(b, a)] = h;
        }
        kkt[(a, s)] = 1.0;
        kkt[(s, a)] = 1.0;
        rhs[a] = -cur.g[i];
    }
    let sol = kkt.svd(true, true).solve(&rhs, 1e-12).ok()?;
    let v: Vec<f64> = (0..s).map(|a| sol[a]).collect();
    let slope: f64 = support.iter().zip(&v).map(|(&i, vi)| cur.g[i] * vi).sum();
    if !(slope < 0.0) || v.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let mut alpha: f64 = 1.0;
    for (&i, &vi) in support.iter().zip(&v) {
        if vi < 0.0 {
            alpha = alpha.min(-cur.w[i] / vi);
        }
    }
    for _ in 0..60 {
        let mut cand = cur.w.clone();
        for (&i, &vi) in support.iter().zip(&v) {
            cand[i] += alpha * vi;
        }
        normalize_with_floor(&mut cand);
        let mc = sp.mixture(&cand);
        let fc = sp.objective_from_mixture(&mc);
        if fc <= cur.f + 1e-4 * alpha * slope {
            let g = sp.gradient_from_mixture(&mc);
            return Some(Iterate { w: cand, m: mc, f: fc, g });
        }
        alpha *= 0.5;
    }
    None
}

fn normalize_with_floor(w: &mut [f64]) {
    w.iter_mut().for_each(|x| *x = x.max(0.0));
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x = (*x / total).max(WEIGHT_FLOOR));
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
}

/// Largest primitive count the exhaustive lattice search accepts.
pub const ORACLE_MAX_PRIMITIVES: usize = 4;

/// Exhaustive search over the simplex lattice `{k / M : Σ k = M}`, `M = round(1/grid_step)`.
/// Ties keep the first lattice point in lexicographic order.
pub fn brute_force_oracle(sp: &StepProblem, grid_step: f64) -> Result<(Weights, f64)> {
    let n = sp.n_prims;
    if n > ORACLE_MAX_PRIMITIVES {
        return Err(Error::OracleTooLarge { max: ORACLE_MAX_PRIMITIVES, got: n });
    }
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::Config(format!("grid step must be in (0, 1], got {grid_step}")));
    }
    let resolution = (1.0 / grid_step).round().max(1.0) as usize;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for_each_lattice_point(n, resolution, |w| {
        let v = sp.objective_from_mixture(&sp.mixture(w));
        if best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((w.to_vec(), v));
        }
    });
    let (w, v) = best.expect("lattice is never empty");
    Ok((Weights::from_raw_unchecked(w), v))
}

/// Visits every point `k / resolution` with non-negative integer `k` summing to
/// `resolution`, in lexicographic order of `k`.
pub fn for_each_lattice_point(n: usize, resolution: usize, mut visit: impl FnMut(&[f64])) {
    let mut counts = vec![0usize; n];
    let mut w = vec![0.0; n];
    fn rec(
        pos: usize,
        remaining: usize,
        resolution: usize,
        counts: &mut [usize],
        w: &mut [f64],
        visit: &mut dyn FnMut(&[f64]),
    ) {
        let n = counts.len();
        if pos + 1 == n {
            counts[pos] = remaining;
            for (wi, &c) in w.iter_mut().zip(counts.iter()) {
                *wi = c as f64 / resolution as f64;
            }
            visit(w);
            return;
        }
        for c in 0..=remaining {
            counts[pos] = c;
            rec(pos + 1, remaining - c, resolution, counts, w, visit);
        }
    }
    rec(0, resolution, resolution, &mut counts, &mut w, &mut visit);
}

/// Index of the dominant weight.
pub fn dominant_primitive(w: &Weights) -> usize {
    argmax(w.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::RngStream;
    use crate::synthetic::{random_model, random_step_problem, random_simplex_point};

    fn softmax_optimal(sp: &StepProblem) -> Vec<f64> {
        let raw: Vec<f64> = sp.ref_policy().iter().zip(sp.action_score()).map(|(r, d)| r * (-d).exp()).collect();
        let s: f64 = raw.iter().sum();
        raw.iter().map(|r| r / s).collect()
    }

    #[test]
    fn zero_scores_when_plants_match_and_costs_vanish() {
        let mut model = random_model(4, 3, 2, 3, 1e-12);
        model.generative = crate::model::GenerativeModel::new(
            model.env.clone(),
            model.generative.ref_policy().clone(),
            model.generative.initial_prior().clone(),
        )
        .unwrap();
        model.costs = crate::model::CostModel::stationary(vec![0.0; 4], 3).unwrap();
        let zeros = vec![0.0; 4];
        for x in 0..4 {
            let sp = build_step_problem(&model, 1, x, Continuation::Values(&zeros)).unwrap();
            assert!(sp.action_score().iter().all(|&d| d.abs() < 1e-15));
        }
    }

    #[test]
    fn terminal_scores_are_plant_kl_plus_expected_state_cost() {
        let model = random_model(5, 3, 2, 8, 1e-12);
        let zeros = vec![0.0; 5];
        let sp = build_step_problem(&model, 1, 2, Continuation::Values(&zeros)).unwrap();
        for u in 0..3 {
            let p = model.env.row(1, 2, u);
            let q = model.generative.ref_kernel().row(1, 2, u);
            let kl: f64 = p.iter().zip(q).map(|(a, b)| a * (a / b).ln()).sum();
            let ec: f64 = p.iter().zip(model.costs.state_cost(1)).map(|(a, c)| a * c).sum();
            assert!((sp.action_score()[u] - kl - ec).abs() < 1e-12);
        }
    }

    /// Direct evaluation of the joint KL over (x', u) plus the expected c̄.
    fn direct_double_sum(model: &Model, x: usize, next_value: &[f64], w: &Weights) -> f64 {
        let mixed = crate::model::mix_policy(&model.primitives, 1, x, w).unwrap();
        let rho = model.generative.ref_policy_row(1, x);
        let cx = model.costs.state_cost(1);
        let cu = model.costs.action_cost(1);
        let mut total = 0.0;
        for u in 0..model.n_actions() {
            let p = model.env.row(1, x, u);
            let q = model.generative.ref_kernel().row(1, x, u);
            for xn in 0..model.n_states() {
                let joint = mixed.probs()[u] * p[xn];
                let ref_joint = rho[u] * q[xn];
                if joint > 0.0 {
                    total += joint * (joint / ref_joint).ln();
                }
                total += joint * (cx[xn] + cu[u] + next_value[xn]);
            }
        }
        total
    }

    #[test]
    fn regrouped_objective_equals_direct_double_sum() {
        let mut rng = RngStream::new(99, 0);
        for seed in 0..10 {
            let model = random_model(6, 5, 3, seed, 1e-12);
            let next: Vec<f64> = (0..6).map(|_| 3.0 * rng.uniform()).collect();
            for x in [0, 3, 5] {
                let sp = build_step_problem(&model, 1, x, Continuation::Values(&next)).unwrap();
                for _ in 0..10 {
                    let w = random_simplex_point(&mut rng, 3);
                    let direct = direct_double_sum(&model, x, &next, &w);
                    assert!((objective(&sp, &w) - direct).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn infinite_plant_kl_is_flagged() {
        let model = random_model(3, 2, 2, 4, 0.0);
        let mut data = Vec::new();
        for x in 0..3 {
            for u in 0..2 {
                let mut row = model.generative.ref_kernel().row(1, x, u).to_vec();
                if x == 1 && u == 1 {
                    row = vec![1.0, 0.0, 0.0];
                }
                data.extend(row);
            }
        }
        let refk = crate::model::EnvironmentKernel::new(
            model.state_grid().clone(),
            model.action_grid().clone(),
            crate::model::Schedule::Stationary(crate::model::RowTable::from_data(6, 3, data).unwrap()),
        )
        .unwrap();
        let mut bad = model.clone();
        bad.generative = crate::model::GenerativeModel::new(refk, model.generative.ref_policy().clone(), model.generative.initial_prior().clone()).unwrap();
        let zeros = vec![0.0; 3];
        let err = build_step_problem(&bad, 1, 1, Continuation::Values(&zeros)).unwrap_err();
        assert!(matches!(err, Error::Infeasible { state: 1, action: 1, .. }), "{err:?}");
        assert!(build_step_problem(&bad, 1, 0, Continuation::Values(&zeros)).is_ok());
    }

    #[test]
    fn objective_vanishes_for_reference_primitive_and_zero_scores() {
        let mut rng = RngStream::new(5, 0);
        let rho = random_simplex_point(&mut rng, 9).into_vec();
        let sp = StepProblem::new(std::slice::from_ref(&rho), rho.clone(), vec![0.0; 9]).unwrap();
        assert!(objective(&sp, &Weights::vertex(1, 0)).abs() < 1e-15);
    }

    #[test]
    fn identical_primitives_give_flat_objective_and_equal_gradient() {
        let mut rng = RngStream::new(6, 0);
        let col = random_simplex_point(&mut rng, 7).into_vec();
        let rho = random_simplex_point(&mut rng, 7).into_vec();
        let d: Vec<f64> = (0..7).map(|_| rng.uniform()).collect();
        let sp = StepProblem::new(&[col.clone(), col], rho, d).unwrap();
        let w1 = random_simplex_point(&mut rng, 2);
        let w2 = random_simplex_point(&mut rng, 2);
        assert!((objective(&sp, &w1) - objective(&sp, &w2)).abs() <= 1e-9);
        let g = gradient(&sp, &w1);
        assert_eq!(g[0], g[1]);
        let h = hessian(&sp, &w1);
        assert!(h.determinant().abs() < 1e-10);
    }

    #[test]
    fn gradient_hand_value_at_reference_vertex() {
        let mut rng = RngStream::new(7, 0);
        let rho = random_simplex_point(&mut rng, 6).into_vec();
        let other = random_simplex_point(&mut rng, 6).into_vec();
        let sp = StepProblem::new(&[rho.clone(), other], rho, vec![0.0; 6]).unwrap();
        let g = gradient(&sp, &Weights::vertex(2, 0));
        assert!((g[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn objective_matches_dense_segment_scan() {
        let mut rng = RngStream::new(8, 0);
        for _ in 0..5 {
            let sp = random_step_problem(&mut rng, 12, 2);
            for j in 0..=1000 {
                let t = j as f64 / 1000.0;
                let w = Weights::from_raw_unchecked(vec![t, 1.0 - t]);
                let m: Vec<f64> = (0..12).map(|u| t * sp.prim(u, 0) + (1.0 - t) * sp.prim(u, 1)).collect();
                let direct: f64 = (0..12).map(|u| m[u] * ((m[u] / sp.ref_policy()[u]).ln() + sp.action_score()[u])).sum();
                assert!((objective(&sp, &w) - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singleton_simplex_solves_without_iterations() {
        let mut rng = RngStream::new(9, 0);
        let sp = random_step_problem(&mut rng, 5, 1);
        let r = solve(&sp, &SolverOptions::default());
        assert_eq!(r.weights.as_slice(), &[1.0]);
        assert_eq!(r.iterations, 0);
        assert!(r.converged);
        assert_eq!(r.objective, objective(&sp, &Weights::vertex(1, 0)));
    }

    #[test]
    fn softmax_optimum_as_first_primitive_wins_outright() {
        let mut rng = RngStream::new(10, 0);
        for _ in 0..10 {
            let base = random_step_problem(&mut rng, 10, 1);
            let star = softmax_optimal(&base);
            let other = random_simplex_point(&mut rng, 10).into_vec();
            let sp = StepProblem::new(&[star, other], base.ref_policy().to_vec(), base.action_score().to_vec()).unwrap();
            let opts = SolverOptions::default();
            let r = solve(&sp, &opts);
            assert!(r.converged, "{r:?}");
            assert!(r.fw_gap <= opts.tol);
            // The gap tolerance leaves a sliver of weight on the other vertex.
            assert!(r.weights.as_slice()[0] > 1.0 - 1e-4, "{r:?}");
            let vertex = objective(&sp, &Weights::vertex(2, 0));
            assert!(r.objective - vertex >= -1e-12 && r.objective - vertex <= r.fw_gap + 1e-12);
        }
    }

    #[test]
    fn three_primitive_solution_beats_simplex_grid() {
        let mut rng = RngStream::new(11, 0);
        for _ in 0..10 {
            let sp = random_step_problem(&mut rng, 15, 3);
            let r = solve(&sp, &SolverOptions::default());
            let (_, grid_min) = brute_force_oracle(&sp, 0.01).unwrap();
            assert!(r.objective <= grid_min + 1e-5);
            assert!(r.converged);
        }
    }

    #[test]
    fn oracle_edge_cases() {
        let mut rng = RngStream::new(12, 0);
        let sp1 = random_step_problem(&mut rng, 4, 1);
        let (w, v) = brute_force_oracle(&sp1, 0.1).unwrap();
        assert_eq!(w.as_slice(), &[1.0]);
        assert_eq!(v, objective(&sp1, &Weights::vertex(1, 0)));

        let col = random_simplex_point(&mut rng, 4).into_vec();
        let rho = random_simplex_point(&mut rng, 4).into_vec();
        let twin = StepProblem::new(&[col.clone(), col], rho, vec![0.5; 4]).unwrap();
        let (w, v) = brute_force_oracle(&twin, 0.1).unwrap();
        // Flat objective: every lattice point ties, so the first one (0, 1) is kept.
        assert_eq!(w.as_slice(), &[0.0, 1.0]);
        for j in 0..=10 {
            let t = j as f64 / 10.0;
            assert!((objective(&twin, &Weights::from_raw_unchecked(vec![t, 1.0 - t])) - v).abs() < 1e-9);
        }

        let big = random_step_problem(&mut rng, 4, 5);
        assert!(matches!(brute_force_oracle(&big, 0.1), Err(Error::OracleTooLarge { .. })));
    }

    #[test]
    fn lattice_enumeration_counts() {
        let mut count = 0;
        for_each_lattice_point(3, 100, |w| {
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            count += 1;
        });
        assert_eq!(count, 101 * 102 / 2);
    }

    #[test]
    fn solve_agrees_with_oracle_on_random_instances() {
        let mut rng = RngStream::new(13, 0);
        for _ in 0..50 {
            let n = 2 + (rng.uniform() * 2.0) as usize;
            let sp = random_step_problem(&mut rng, 8, n);
            let r = solve(&sp, &SolverOptions::default());
            let (_, v) = brute_force_oracle(&sp, 0.02).unwrap();
            assert!(r.objective <= v + 1e-9);
            assert!(v - r.objective <= 0.05, "grid value {v} vs solver {}", r.objective);
        }
    }
}
