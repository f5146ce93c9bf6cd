//! Finite grids and probability vectors over them.
//!
//! Every distribution in the crate is a dense probability vector indexed by the
//! flat index of a [`Grid`]. Gaussians are discretized by integrating the density
//! over each bin's cell, flooring at a small ε and renormalizing, which keeps every
//! row full-support so KL terms stay finite.

use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `Σ p = 1` accepted by [`FiniteDistribution::new`].
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Default support floor applied to primitives, reference policies and kernel rows.
pub const DEFAULT_FLOOR: f64 = 1e-12;

/// One axis of a grid: `bins` equidistant centers spanning `[lower, upper]`,
/// both endpoints included. A single-bin axis sits at the midpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lower: f64,
    pub upper: f64,
    pub bins: usize,
}

impl Axis {
    pub fn new(lower: f64, upper: f64, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidGrid("axis needs at least one bin".into()));
        }
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::InvalidGrid(format!(
                "axis bounds must be finite and strictly ordered, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper, bins })
    }

    /// Distance between neighbouring centers (the full width for one bin).
    pub fn spacing(&self) -> f64 {
        if self.bins == 1 {
            self.upper - self.lower
        } else {
            (self.upper - self.lower) / (self.bins - 1) as f64
        }
    }

    pub fn center(&self, i: usize) -> f64 {
        if self.bins == 1 {
            0.5 * (self.lower + self.upper)
        } else if i + 1 == self.bins {
            self.upper
        } else {
            self.lower + i as f64 * self.spacing()
        }
    }

    /// Index of the center closest to `v`; values outside the bounds clamp to the edge bins.
    pub fn nearest(&self, v: f64) -> usize {
        if self.bins == 1 {
            return 0;
        }
        let t = ((v - self.lower) / self.spacing()).round();
        t.clamp(0.0, (self.bins - 1) as f64) as usize
    }
}

/// Cartesian product of axes. Flat indices are row-major: the last axis varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
    centers: Vec<Vec<f64>>,
    strides: Vec<usize>,
    flat_size: usize,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidGrid("grid needs at least one axis".into()));
        }
        for a in &axes {
            Axis::new(a.lower, a.upper, a.bins)?;
        }
        let centers: Vec<Vec<f64>> = axes
            .iter()
            .map(|a| (0..a.bins).map(|i| a.center(i)).collect())
            .collect();
        let mut strides = vec![1; axes.len()];
        for d in (0..axes.len() - 1).rev() {
            strides[d] = strides[d + 1] * axes[d + 1].bins;
        }
        let flat_size = axes.iter().map(|a| a.bins).product();
        Ok(Self {
            axes,
            centers,
            strides,
            flat_size,
        })
    }

    /// A one-dimensional grid whose centers are `0, 1, ..., n-1`; handy for
    /// abstract tabular problems where coordinates carry no meaning.
    pub fn indexed(n: usize) -> Result<Self> {
        if n == 1 {
            return Grid::new(vec![Axis::new(-0.5, 0.5, 1)?]);
        }
        Grid::new(vec![Axis::new(0.0, n.saturating_sub(1) as f64, n)?])
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn ndim(&self) -> usize {
        self.axes.len()
    }

    pub fn flat_size(&self) -> usize {
        self.flat_size
    }

    pub fn axis_centers(&self, axis: usize) -> &[f64] {
        &self.centers[axis]
    }

    pub fn flat_index(&self, multi: &[usize]) -> Result<usize> {
        if multi.len() != self.ndim() {
            return Err(Error::DimensionMismatch {
                what: "multi-index",
                expected: self.ndim(),
                got: multi.len(),
            });
        }
        let mut flat = 0;
        for (d, (&i, a)) in multi.iter().zip(&self.axes).enumerate() {
            if i >= a.bins {
                return Err(Error::InvalidGrid(format!(
                    "index {i} out of range on axis {d} ({} bins)",
                    a.bins
                )));
            }
            flat += i * self.strides[d];
        }
        Ok(flat)
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let mut rest = flat;
        self.strides
            .iter()
            .map(|&s| {
                let i = rest / s;
                rest %= s;
                i
            })
            .collect()
    }

    /// Coordinates of the center of a flat bin.
    pub fn center(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(d, &i)| self.centers[d][i])
            .collect()
    }

    pub fn nearest(&self, point: &[f64]) -> Result<usize> {
        if point.len() != self.ndim() {
            return Err(Error::DimensionMismatch {
                what: "point",
                expected: self.ndim(),
                got: point.len(),
            });
        }
        let multi: Vec<usize> = self
            .axes
            .iter()
            .zip(point)
            .map(|(a, &v)| a.nearest(v))
            .collect();
        self.flat_index(&multi)
    }
}

/// A probability vector over the flat indices of a grid.
#[derive(Debug, Clone)]
pub struct FiniteDistribution {
    probs: Vec<f64>,
    grid: Arc<Grid>,
}

impl PartialEq for FiniteDistribution {
    fn eq(&self, other: &Self) -> bool {
        self.probs == other.probs && same_grid(&self.grid, &other.grid)
    }
}

fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

impl FiniteDistribution {
    /// Wraps an already-normalized probability vector.
    pub fn new(grid: Arc<Grid>, probs: Vec<f64>) -> Result<Self> {
        validate_probs(&probs, grid.flat_size())?;
        Ok(Self { probs, grid })
    }

    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights(grid: Arc<Grid>, mut weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.flat_size() {
            return Err(Error::DimensionMismatch {
                what: "weights",
                expected: grid.flat_size(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDistribution(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("weights sum to zero".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self {
            probs: weights,
            grid,
        })
    }

    pub fn uniform(grid: Arc<Grid>) -> Self {
        let n = grid.flat_size();
        Self {
            probs: vec![1.0 / n as f64; n],
            grid,
        }
    }

    pub fn point_mass(grid: Arc<Grid>, index: usize) -> Result<Self> {
        let n = grid.flat_size();
        if index >= n {
            return Err(Error::InvalidDistribution(format!(
                "point mass index {index} outside support of size {n}"
            )));
        }
        let mut probs = vec![0.0; n];
        probs[index] = 1.0;
        Ok(Self { probs, grid })
    }

    /// Raises every entry to at least `floor` and renormalizes.
    pub fn with_floor(mut self, floor: f64) -> Self {
        apply_floor(&mut self.probs, floor);
        self
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn min_prob(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mode(&self) -> usize {
        argmax(&self.probs)
    }

    /// Mean of the bin-center coordinates under this distribution.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.ndim()];
        for (flat, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (o, c) in out.iter_mut().zip(self.grid.center(flat)) {
                *o += p * c;
            }
        }
        out
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.probs)
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }
}

pub(crate) fn validate_probs(probs: &[f64], expected_len: usize) -> Result<()> {
    if probs.len() != expected_len {
        return Err(Error::DimensionMismatch {
            what: "probability vector",
            expected: expected_len,
            got: probs.len(),
        });
    }
    if let Some((i, p)) = probs
        .iter()
        .enumerate()
        .find(|(_, p)| !p.is_finite() || **p < 0.0)
    {
        return Err(Error::InvalidDistribution(format!(
            "entry {i} is {p}, expected a finite non-negative value"
        )));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::InvalidDistribution(format!(
            "entries sum to {total}, expected 1"
        )));
    }
    Ok(())
}

pub(crate) fn apply_floor(probs: &mut [f64], floor: f64) {
    if floor <= 0.0 {
        return;
    }
    probs.iter_mut().for_each(|p| *p = p.max(floor));
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Discretizes an axis-aligned Gaussian onto `grid`.
///
/// Each bin receives the Gaussian mass of its cell `[c - h/2, c + h/2]` per axis
/// (`h` the center spacing), normalized over the grid, floored at `floor` and
/// renormalized. The mean may lie outside the grid.
pub fn discretize_gaussian(
    grid: Arc<Grid>,
    mean: &[f64],
    variances: &[f64],
    floor: f64,
) -> Result<FiniteDistribution> {
    let mut probs = vec![0.0; grid.flat_size()];
    discretize_gaussian_into(&grid, mean, variances, floor, &mut probs)?;
    Ok(FiniteDistribution { probs, grid })
}

/// Same as [`discretize_gaussian`] but writes into a caller-provided row.
pub fn discretize_gaussian_into(
    grid: &Grid,
    mean: &[f64],
    variances: &[f64],
    floor: f64,
    out: &mut [f64],
) -> Result<()> {
    let d = grid.ndim();
    if mean.len() != d {
        return Err(Error::DimensionMismatch {
            what: "gaussian mean",
            expected: d,
            got: mean.len(),
        });
    }
    if variances.len() != d {
        return Err(Error::DimensionMismatch {
            what: "gaussian variances",
            expected: d,
            got: variances.len(),
        });
    }
    if out.len() != grid.flat_size() {
        return Err(Error::DimensionMismatch {
            what: "output row",
            expected: grid.flat_size(),
            got: out.len(),
        });
    }
    if let Some((axis, &value)) = variances
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v > 0.0))
    {
        return Err(Error::NonPositiveVariance { axis, value });
    }
    if !(floor >= 0.0 && floor.is_finite()) {
        return Err(Error::InvalidDistribution(format!(
            "floor must be finite and non-negative, got {floor}"
        )));
    }

    let factors: Vec<Vec<f64>> = (0..d)
        .map(|axis| axis_masses(&grid.axes[axis], grid.axis_centers(axis), mean[axis], variances[axis]))
        .collect();

    for (flat, slot) in out.iter_mut().enumerate() {
        let mut rest = flat;
        let mut v = 1.0;
        for axis in 0..d {
            let stride = grid.strides[axis];
            v *= factors[axis][rest / stride];
            rest %= stride;
        }
        *slot = v;
    }
    apply_floor(out, floor);
    Ok(())
}

/// Normalized Gaussian mass of each cell `[c - h/2, c + h/2]` along one axis.
fn axis_masses(axis: &Axis, centers: &[f64], mean: f64, variance: f64) -> Vec<f64> {
    let sigma = variance.sqrt();
    let half = 0.5 * axis.spacing();
    let z = |v: f64| (v - mean) / (sigma * std::f64::consts::SQRT_2);
    let masses: Vec<f64> = centers
        .iter()
        .map(|&c| {
            let (a, b) = (z(c - half), z(c + half));
            // Work in the tail that keeps the difference well conditioned.
            if a >= 0.0 {
                0.5 * (libm::erfc(a) - libm::erfc(b))
            } else if b <= 0.0 {
                0.5 * (libm::erfc(-b) - libm::erfc(-a))
            } else {
                0.5 * (libm::erf(b) - libm::erf(a))
            }
        })
        .collect();
    let total: f64 = masses.iter().sum();
    if total > 0.0 && total.is_finite() {
        return masses.iter().map(|m| m / total).collect();
    }
    // Mean so far off the grid that every cell underflows: fall back to the
    // log-density at the centers, shifted so the largest term is exp(0).
    let logs: Vec<f64> = centers.iter().map(|&c| -0.5 * (c - mean).powi(2) / variance).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total).collect()
}

/// KL divergence `Σ p ln(p/q)` in nats. Returns `+∞` when `p` puts mass where `q` has none.
pub fn kl_divergence(p: &FiniteDistribution, q: &FiniteDistribution) -> Result<f64> {
    if !same_grid(&p.grid, &q.grid) {
        return Err(Error::GridMismatch);
    }
    Ok(kl_slices(&p.probs, &q.probs))
}

/// KL divergence between two raw probability vectors of equal length.
pub fn kl_slices(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return f64::INFINITY;
        }
        acc += pi * (pi / qi).ln();
    }
    acc
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&pi| pi > 0.0)
        .map(|&pi| pi * pi.ln())
        .sum::<f64>()
}

/// `Σ p_i v_i`.
pub fn expectation(dist: &FiniteDistribution, values: &[f64]) -> Result<f64> {
    if values.len() != dist.len() {
        return Err(Error::DimensionMismatch {
            what: "expectation values",
            expected: dist.len(),
            got: values.len(),
        });
    }
    Ok(dot(&dist.probs, values))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Deterministic random stream identified by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Draws a flat index distributed according to `dist`.
pub fn sample(dist: &FiniteDistribution, rng: &mut RngStream) -> usize {
    sample_slice(&dist.probs, rng)
}

pub(crate) fn sample_slice(probs: &[f64], rng: &mut RngStream) -> usize {
    // probs come from validated distributions, so the weights are never all zero.
    let index = WeightedIndex::new(probs).expect("valid probability vector");
    index.sample(rng)
}
