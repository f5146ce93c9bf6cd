//! Reference computations written directly from the definitions, sharing no
//! numerics with the library beyond the types needed to call it.
#![allow(dead_code)]

use std::sync::OnceLock;

use freegate::cli::{build_tabular, TabularConfig};
use freegate::gating::StepProblem;
use freegate::model::Model;
use freegate::nav::{build_scenario, NavScenario, NavScenarioConfig};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random pmf with a strictly positive floor. Squared exponentials spread the
/// masses more than a flat Dirichlet would.
pub fn pmf(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|_| {
            let e: f64 = rng.sample(Exp1);
            e * e + 1e-9
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// A uniform point on the simplex.
pub fn simplex_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// One gating problem held as plain columns.
#[derive(Debug, Clone)]
pub struct RawStep {
    /// `cols[i][u]`: probability of action `u` under primitive `i`.
    pub cols: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
    pub d: Vec<f64>,
}

impl RawStep {
    pub fn random(rng: &mut ChaCha8Rng, n_actions: usize, n_prims: usize) -> Self {
        let cols = (0..n_prims).map(|_| pmf(rng, n_actions)).collect();
        let rho = pmf(rng, n_actions);
        let d = (0..n_actions).map(|_| 3.0 * rng.random::<f64>()).collect();
        Self { cols, rho, d }
    }

    pub fn problem(&self) -> StepProblem {
        StepProblem::new(&self.cols, self.rho.clone(), self.d.clone()).unwrap()
    }

    pub fn n_actions(&self) -> usize {
        self.rho.len()
    }

    pub fn n_prims(&self) -> usize {
        self.cols.len()
    }

    pub fn mass(&self, w: &[f64], u: usize) -> f64 {
        let mut m = 0.0;
        for i in 0..self.n_prims() {
            m += w[i] * self.cols[i][u];
        }
        m
    }

    /// `Σ_u Σ_i w_i π_i(u) (ln(Σ_j w_j π_j(u) / ρ(u)) + d(u))`.
    pub fn objective(&self, w: &[f64]) -> f64 {
        let mut total = 0.0;
        for u in 0..self.n_actions() {
            let m = self.mass(w, u);
            if m > 0.0 {
                total += m * ((m / self.rho[u]).ln() + self.d[u]);
            }
        }
        total
    }

    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        (0..self.n_prims())
            .map(|i| {
                let mut g = 0.0;
                for u in 0..self.n_actions() {
                    let m = self.mass(w, u);
                    g += self.cols[i][u] * ((m / self.rho[u]).ln() + self.d[u] + 1.0);
                }
                g
            })
            .collect()
    }

    pub fn vertex_objective(&self, i: usize) -> f64 {
        let mut e = vec![0.0; self.n_prims()];
        e[i] = 1.0;
        self.objective(&e)
    }

    pub fn primitive_rank(&self) -> usize {
        DMatrix::from_fn(self.n_actions(), self.n_prims(), |u, i| self.cols[i][u]).rank(1e-10)
    }
}

/// Central difference of `f` along `v` at `w`.
pub fn directional_fd(f: impl Fn(&[f64]) -> f64, w: &[f64], v: &[f64], h: f64) -> f64 {
    let at = |s: f64| {
        let p: Vec<f64> = w.iter().zip(v).map(|(a, b)| a + s * b).collect();
        f(&p)
    };
    (at(h) - at(-h)) / (2.0 * h)
}

/// Every point of `{c / res : c non-negative integers summing to res}`.
pub fn simplex_grid(n: usize, res: usize) -> Vec<Vec<f64>> {
    fn counts(n: usize, remaining: usize) -> Vec<Vec<usize>> {
        if n == 1 {
            return vec![vec![remaining]];
        }
        let mut out = Vec::new();
        for c in 0..=remaining {
            for mut tail in counts(n - 1, remaining - c) {
                tail.insert(0, c);
                out.push(tail);
            }
        }
        out
    }
    counts(n, res).into_iter().map(|c| c.iter().map(|&v| v as f64 / res as f64).collect()).collect()
}

/// A stationary tabular instance in nested-vector form.
#[derive(Debug, Clone)]
pub struct Tabular {
    pub plant: Vec<Vec<Vec<f64>>>,
    pub ref_plant: Vec<Vec<Vec<f64>>>,
    pub rho: Vec<Vec<f64>>,
    pub prims: Vec<Vec<Vec<f64>>>,
    pub state_cost: Vec<f64>,
    pub action_cost: Vec<f64>,
    pub prior: Vec<f64>,
}

impl Tabular {
    pub fn random(rng: &mut ChaCha8Rng, ns: usize, na: usize, n: usize) -> Self {
        let kernel = |rng: &mut ChaCha8Rng| (0..ns).map(|_| (0..na).map(|_| pmf(rng, ns)).collect()).collect();
        let plant = kernel(rng);
        let ref_plant = kernel(rng);
        let rho = (0..ns).map(|_| pmf(rng, na)).collect();
        let prims = (0..n).map(|_| (0..ns).map(|_| pmf(rng, na)).collect()).collect();
        let state_cost = (0..ns).map(|_| 5.0 * rng.random::<f64>()).collect();
        let action_cost = (0..na).map(|_| rng.random::<f64>()).collect();
        let prior = pmf(rng, ns);
        Self { plant, ref_plant, rho, prims, state_cost, action_cost, prior }
    }

    pub fn config(&self) -> TabularConfig {
        TabularConfig {
            plant: self.plant.clone(),
            ref_plant: self.ref_plant.clone(),
            ref_policy: self.rho.clone(),
            primitives: self.prims.clone(),
            state_cost: self.state_cost.clone(),
            action_cost: Some(self.action_cost.clone()),
            prior: Some(self.prior.clone()),
        }
    }

    pub fn model(&self) -> Model {
        build_tabular(&self.config()).unwrap()
    }

    pub fn n_states(&self) -> usize {
        self.plant.len()
    }

    /// The step problem at `x` given the next cost-to-go `l`:
    /// `d(u) = c^u(u) + Σ_x' p(x'|x,u) (ln(p(x'|x,u) / p̄(x'|x,u)) + c^x(x') + l(x'))`.
    pub fn step(&self, x: usize, l: &[f64]) -> RawStep {
        let na = self.rho[x].len();
        let d = (0..na)
            .map(|u| {
                let mut s = self.action_cost[u];
                for (xn, &p) in self.plant[x][u].iter().enumerate() {
                    s += p * ((p / self.ref_plant[x][u][xn]).ln() + self.state_cost[xn] + l[xn]);
                }
                s
            })
            .collect();
        RawStep { cols: self.prims.iter().map(|p| p[x].clone()).collect(), rho: self.rho[x].clone(), d }
    }

    /// Free energy of a fixed weight map `w[k][x]`, accumulated forward over the
    /// state marginal.
    pub fn forward_free_energy(&self, w: &[Vec<Vec<f64>>]) -> f64 {
        let ns = self.n_states();
        let zero = vec![0.0; ns];
        let mut marginal = self.prior.clone();
        let mut total = 0.0;
        for wk in w {
            let mut next = vec![0.0; ns];
            for x in 0..ns {
                let sp = self.step(x, &zero);
                total += marginal[x] * sp.objective(&wk[x]);
                for u in 0..sp.n_actions() {
                    let m = sp.mass(&wk[x], u);
                    for (xn, p) in self.plant[x][u].iter().enumerate() {
                        next[xn] += marginal[x] * m * p;
                    }
                }
            }
            marginal = next;
        }
        total
    }
}

/// Lattice enumeration of the recursion for two primitives: each `(k, x)` keeps
/// the best of `res + 1` points on the segment given the enumerated `l_{k+1}`.
/// Returns the resulting free energy and a bound on its excess over the optimum.
pub fn lattice_recursion(t: &Tabular, horizon: usize, res: usize) -> (f64, f64) {
    assert_eq!(t.prims.len(), 2);
    let ns = t.n_states();
    let h = 1.0 / res as f64;
    let mut l = vec![0.0; ns];
    let mut bound = 0.0;
    for _ in 0..horizon {
        let mut next_l = vec![0.0; ns];
        let mut worst = 0.0f64;
        for x in 0..ns {
            let sp = t.step(x, &l);
            let vals: Vec<f64> = (0..=res).map(|j| sp.objective(&[j as f64 * h, 1.0 - j as f64 * h])).collect();
            let mut j = 0;
            for i in 1..vals.len() {
                if vals[i] < vals[j] {
                    j = i;
                }
            }
            next_l[x] = vals[j];
            // Convexity puts the minimizer within one step of j.
            let excess = if j > 0 && j < res {
                (vals[j - 1] - vals[j]).max(vals[j + 1] - vals[j])
            } else {
                let s = j as f64 * h;
                let g = sp.gradient(&[s, 1.0 - s]);
                let slope = g[0] - g[1];
                if j == 0 { -slope * h } else { slope * h }
            };
            worst = worst.max(excess.max(0.0));
        }
        bound += worst;
        l = next_l;
    }
    let total = t.prior.iter().zip(&l).map(|(p, v)| p * v).sum();
    (total, bound)
}

/// The default navigation scenario, built once per test binary.
pub fn nav() -> &'static NavScenario {
    static SCENARIO: OnceLock<NavScenario> = OnceLock::new();
    SCENARIO.get_or_init(|| build_scenario(&NavScenarioConfig::default()).unwrap())
}
