//! Planar navigation instance: a single integrator on a 2D grid, four primitives
//! that each drive toward one wall, a reference model that drives toward the goal,
//! and a state cost made of obstacle and wall bumps.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CostModel, EnvironmentKernel, GenerativeModel, Model, PrimitiveSet, RowTable, Schedule};
use crate::planner::LookaheadTable;
use crate::prob::{discretize_gaussian_into, Axis, FiniteDistribution, Grid};

/// Primitive order used throughout: index 0 drives right, 1 left, 2 up, 3 down.
pub const PRIMITIVE_NAMES: [&str; 4] = ["right", "left", "up", "down"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NavScenarioConfig {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    /// Each velocity component lives in `[-max_speed, max_speed]`.
    pub max_speed: f64,
    pub state_bins: [usize; 2],
    pub action_bins: [usize; 2],
    pub dt: f64,
    /// Isotropic variances of the plant, reference plant, primitives and reference policy.
    pub plant_variance: f64,
    pub ref_plant_variance: f64,
    pub primitive_variance: f64,
    pub ref_policy_variance: f64,
    pub goal: [f64; 2],
    pub obstacles: Vec<[f64; 2]>,
    pub obstacle_gain: f64,
    pub wall_gain: f64,
    pub obstacle_width: f64,
    pub wall_width: f64,
    pub primitive_gain: f64,
    pub reference_gain: f64,
    pub floor: f64,
}

impl Default for NavScenarioConfig {
    fn default() -> Self {
        Self {
            x_range: [-1.6, 1.6],
            y_range: [-1.0, 1.0],
            max_speed: 0.2,
            state_bins: [33, 21],
            action_bins: [7, 7],
            dt: 0.033,
            plant_variance: 0.008,
            ref_plant_variance: 0.002,
            primitive_variance: 0.005,
            ref_policy_variance: 0.005,
            goal: [-1.3, 0.0],
            obstacles: vec![[0.0, 0.5], [-0.8, -0.1], [0.5, -0.3]],
            obstacle_gain: 150.0,
            wall_gain: 30.0,
            obstacle_width: 0.15,
            wall_width: 0.08,
            primitive_gain: 1.0,
            reference_gain: 0.5,
            floor: crate::prob::DEFAULT_FLOOR,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be non-negative and finite, got {v}")))
    }
}

impl NavScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("x_range", self.x_range), ("y_range", self.y_range)] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] < r[1]) {
                return Err(Error::Config(format!("{name} must be an increasing pair, got {r:?}")));
            }
        }
        if self.state_bins.iter().chain(&self.action_bins).any(|&b| b < 2) {
            return Err(Error::Config("every axis needs at least two bins".into()));
        }
        positive("max_speed", self.max_speed)?;
        positive("dt", self.dt)?;
        positive("plant_variance", self.plant_variance)?;
        positive("ref_plant_variance", self.ref_plant_variance)?;
        positive("primitive_variance", self.primitive_variance)?;
        positive("ref_policy_variance", self.ref_policy_variance)?;
        positive("obstacle_width", self.obstacle_width)?;
        positive("wall_width", self.wall_width)?;
        non_negative("obstacle_gain", self.obstacle_gain)?;
        non_negative("wall_gain", self.wall_gain)?;
        non_negative("primitive_gain", self.primitive_gain)?;
        non_negative("reference_gain", self.reference_gain)?;
        if !(self.floor >= 0.0 && self.floor < 1e-3) {
            return Err(Error::Config(format!("floor must lie in [0, 1e-3), got {}", self.floor)));
        }
        if !self.inside(self.goal) {
            return Err(Error::Config(format!("goal {:?} lies outside the workspace", self.goal)));
        }
        if self.obstacles.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("obstacle coordinates must be finite".into()));
        }
        Ok(())
    }

    fn inside(&self, p: [f64; 2]) -> bool {
        (self.x_range[0]..=self.x_range[1]).contains(&p[0]) && (self.y_range[0]..=self.y_range[1]).contains(&p[1])
    }

    pub fn state_grid(&self) -> Result<Grid> {
        Grid::new(vec![
            Axis::new(self.x_range[0], self.x_range[1], self.state_bins[0])?,
            Axis::new(self.y_range[0], self.y_range[1], self.state_bins[1])?,
        ])
    }

    pub fn action_grid(&self) -> Result<Grid> {
        Grid::new(vec![
            Axis::new(-self.max_speed, self.max_speed, self.action_bins[0])?,
            Axis::new(-self.max_speed, self.max_speed, self.action_bins[1])?,
        ])
    }

    fn clip(&self, v: [f64; 2]) -> [f64; 2] {
        v.map(|c| c.clamp(-self.max_speed, self.max_speed))
    }

    /// Mean velocity of primitive `i` (see [`PRIMITIVE_NAMES`]) at position `p`, after clipping.
    pub fn primitive_mean(&self, i: usize, p: [f64; 2]) -> [f64; 2] {
        let k = self.primitive_gain;
        let raw = match i {
            0 => [k * (self.x_range[1] - p[0]), 0.0],
            1 => [-k * (p[0] - self.x_range[0]), 0.0],
            2 => [0.0, k * (self.y_range[1] - p[1])],
            3 => [0.0, -k * (p[1] - self.y_range[0])],
            _ => panic!("navigation has four primitives, got index {i}"),
        };
        self.clip(raw)
    }

    /// Mean of the reference policy at `p`: proportional pull toward the goal, clipped.
    pub fn reference_mean(&self, p: [f64; 2]) -> [f64; 2] {
        let k = self.reference_gain;
        self.clip([k * (self.goal[0] - p[0]), k * (self.goal[1] - p[1])])
    }

    /// Obstacle bumps plus one bump per wall, each of unit height before its gain.
    pub fn state_cost(&self, p: [f64; 2]) -> f64 {
        let so = 2.0 * self.obstacle_width * self.obstacle_width;
        let sw = 2.0 * self.wall_width * self.wall_width;
        let obstacles: f64 = self
            .obstacles
            .iter()
            .map(|o| (-((p[0] - o[0]).powi(2) + (p[1] - o[1]).powi(2)) / so).exp())
            .sum();
        let walls: f64 = [
            p[0] - self.x_range[0],
            self.x_range[1] - p[0],
            p[1] - self.y_range[0],
            self.y_range[1] - p[1],
        ]
        .iter()
        .map(|d| (-d * d / sw).exp())
        .sum();
        self.obstacle_gain * obstacles + self.wall_gain * walls
    }

    /// Distance from `p` to the closest obstacle center (infinite without obstacles).
    pub fn min_obstacle_distance(&self, p: [f64; 2]) -> f64 {
        self.obstacles
            .iter()
            .map(|o| ((p[0] - o[0]).powi(2) + (p[1] - o[1]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min)
    }
}

/// A built navigation instance.
#[derive(Debug, Clone)]
pub struct NavScenario {
    pub config: NavScenarioConfig,
    pub model: Model,
    pub lookahead: LookaheadTable,
}

fn point(v: &[f64]) -> [f64; 2] {
    [v[0], v[1]]
}

impl NavScenario {
    pub fn position(&self, x: usize) -> [f64; 2] {
        point(&self.model.state_grid().center(x))
    }

    pub fn velocity(&self, u: usize) -> [f64; 2] {
        point(&self.model.action_grid().center(u))
    }

    pub fn state_at(&self, p: [f64; 2]) -> usize {
        self.model.state_grid().nearest(&p).expect("two-dimensional point")
    }

    pub fn goal_state(&self) -> usize {
        self.state_at(self.config.goal)
    }

    /// The state cost over the grid, indexed by flat state.
    pub fn cost_table(&self) -> &[f64] {
        self.model.costs.state_cost(1)
    }

    /// Cost laid out for plotting: one row per y bin from top to bottom, one column per x bin.
    pub fn cost_heatmap(&self) -> Vec<Vec<f64>> {
        let grid = self.model.state_grid();
        let (nx, ny) = (grid.axes()[0].bins, grid.axes()[1].bins);
        let cost = self.cost_table();
        (0..ny)
            .rev()
            .map(|iy| (0..nx).map(|ix| cost[ix * ny + iy]).collect())
            .collect()
    }

    /// Same scenario restricted to one primitive.
    pub fn with_single_primitive(&self, i: usize) -> Self {
        Self {
            config: self.config.clone(),
            model: self.model.with_single_primitive(i),
            lookahead: self.lookahead.clone(),
        }
    }
}

fn gaussian_rows(grid: &Grid, n_rows: usize, variance: f64, floor: f64, mean: impl Fn(usize) -> [f64; 2] + Sync) -> Result<RowTable> {
    RowTable::build(n_rows, grid.flat_size(), |r, out| {
        discretize_gaussian_into(grid, &mean(r), &[variance, variance], floor, out)
    })
}

/// Builds grids, kernels, primitives, reference model, costs and the lookahead table.
pub fn build_scenario(cfg: &NavScenarioConfig) -> Result<NavScenario> {
    cfg.validate()?;
    let sg = Arc::new(cfg.state_grid()?);
    let ag = Arc::new(cfg.action_grid()?);
    let ns = sg.flat_size();
    let na = ag.flat_size();
    let centers: Vec<[f64; 2]> = (0..ns).map(|x| point(&sg.center(x))).collect();
    let velocities: Vec<[f64; 2]> = (0..na).map(|u| point(&ag.center(u))).collect();
    let shifted = |r: usize| {
        let (p, v) = (centers[r / na], velocities[r % na]);
        [p[0] + v[0] * cfg.dt, p[1] + v[1] * cfg.dt]
    };

    let plant = gaussian_rows(&sg, ns * na, cfg.plant_variance, cfg.floor, shifted)?;
    let env = EnvironmentKernel::new(sg.clone(), ag.clone(), Schedule::Stationary(plant))?;
    let ref_plant = gaussian_rows(&sg, ns * na, cfg.ref_plant_variance, cfg.floor, shifted)?;
    let ref_kernel = EnvironmentKernel::new(sg.clone(), ag.clone(), Schedule::Stationary(ref_plant))?;
    let rho = gaussian_rows(&ag, ns, cfg.ref_policy_variance, cfg.floor, |x| cfg.reference_mean(centers[x]))?;
    let generative = GenerativeModel::new(ref_kernel, Schedule::Stationary(rho), FiniteDistribution::uniform(sg.clone()))?;

    let prims = (0..PRIMITIVE_NAMES.len())
        .map(|i| gaussian_rows(&ag, ns, cfg.primitive_variance, cfg.floor, |x| cfg.primitive_mean(i, centers[x])))
        .collect::<Result<Vec<_>>>()?;
    let primitives = PrimitiveSet::new(ag.clone(), ns, Schedule::Stationary(prims))?;
    let costs = CostModel::stationary(centers.iter().map(|&p| cfg.state_cost(p)).collect(), na)?;

    let model = Model::new(env, generative, costs, primitives)?;
    let lookahead = LookaheadTable::build(&model, 1);
    Ok(NavScenario { config: cfg.clone(), model, lookahead })
}
