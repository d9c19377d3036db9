//! State and control spaces of the discrete problem.
//!
//! The state `Y` holds the TM fields `(E_z, H_x, H_y)` on a staggered grid over
//! the unit square. `E_z` lives at the grid nodes `(i, j)`, `H_x` at the
//! horizontal half nodes `(i, j + 1/2)` and `H_y` at `(i + 1/2, j)`. All three
//! components are packed into one flat buffer in that order, each component
//! in row-major order with `i` running fastest.
//!
//! Controls are boundary functions sampled at the perimeter nodes. A control
//! trajectory stores one boundary slice per time-step midpoint.

use serde::{Deserialize, Serialize};

use crate::boundary::BoundaryMesh;
use crate::error::{check_len, Error, Result};

/// Minimal vector-space interface shared by states, boundary slices and
/// control trajectories. The solvers in this crate are generic over it.
pub trait Vector: Clone {
    fn as_slice(&self) -> &[f64];
    fn as_mut_slice(&mut self) -> &mut [f64];

    /// A zero vector with the same layout as `self`.
    fn zeros_like(&self) -> Self;

    /// `true` when `other` has the same layout as `self`.
    fn same_layout(&self, other: &Self) -> bool {
        self.as_slice().len() == other.as_slice().len()
    }

    /// `self += a * x`
    fn axpy(&mut self, a: f64, x: &Self) {
        debug_assert!(self.same_layout(x));
        for (s, xi) in self.as_mut_slice().iter_mut().zip(x.as_slice()) {
            *s += a * xi;
        }
    }

    fn scale(&mut self, a: f64) {
        for s in self.as_mut_slice() {
            *s *= a;
        }
    }

    fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|v| v.is_finite())
    }

    fn is_zero(&self) -> bool {
        self.as_slice().iter().all(|&v| v == 0.0)
    }
}

impl Vector for Vec<f64> {
    fn as_slice(&self) -> &[f64] {
        self
    }
    fn as_mut_slice(&mut self) -> &mut [f64] {
        self
    }
    fn zeros_like(&self) -> Self {
        vec![0.0; self.len()]
    }
}

/// Grid dimensions: `nx` by `ny` cells on the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub nx: usize,
    pub ny: usize,
}

impl GridShape {
    pub fn new(nx: usize, ny: usize) -> Self {
        Self { nx, ny }
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        1.0 / self.ny as f64
    }

    pub fn n_ez(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn n_hx(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    pub fn n_hy(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    /// Total number of state unknowns.
    pub fn state_len(&self) -> usize {
        self.n_ez() + self.n_hx() + self.n_hy()
    }

    /// Number of perimeter nodes, corners counted once.
    pub fn n_gamma(&self) -> usize {
        2 * self.nx + 2 * self.ny
    }

    /// Flat index of `E_z` at node `(i, j)`.
    pub fn ez_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.nx && j <= self.ny);
        i + (self.nx + 1) * j
    }

    /// Flat index of `H_x` at `(i, j + 1/2)`.
    pub fn hx_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.nx && j < self.ny);
        self.n_ez() + i + (self.nx + 1) * j
    }

    /// Flat index of `H_y` at `(i + 1/2, j)`.
    pub fn hy_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j <= self.ny);
        self.n_ez() + self.n_hx() + i + self.nx * j
    }

    /// Perimeter nodes counterclockwise from the lower-left corner.
    pub fn perimeter_nodes(&self) -> Vec<(usize, usize)> {
        let (nx, ny) = (self.nx, self.ny);
        let mut nodes = Vec::with_capacity(self.n_gamma());
        nodes.extend((0..nx).map(|i| (i, 0)));
        nodes.extend((0..ny).map(|j| (nx, j)));
        nodes.extend((1..=nx).rev().map(|i| (i, ny)));
        nodes.extend((1..=ny).rev().map(|j| (0, j)));
        nodes
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.nx < 4 || self.ny < 4 {
            return Err(Error::InvalidParameter(format!(
                "grid must have at least 4x4 cells, got {}x{}",
                self.nx, self.ny
            )));
        }
        Ok(())
    }
}

/// Discrete electromagnetic state `(E_z, H_x, H_y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    shape: GridShape,
    data: Vec<f64>,
}

impl StateVector {
    pub fn zeros(shape: GridShape) -> Self {
        Self { shape, data: vec![0.0; shape.state_len()] }
    }

    /// Wraps a packed buffer `[ez | hx | hy]`.
    pub fn from_vec(shape: GridShape, data: Vec<f64>) -> Result<Self> {
        check_len("state buffer", data.len(), shape.state_len())?;
        Ok(Self { shape, data })
    }

    pub fn from_fields(shape: GridShape, ez: &[f64], hx: &[f64], hy: &[f64]) -> Result<Self> {
        check_len("ez", ez.len(), shape.n_ez())?;
        check_len("hx", hx.len(), shape.n_hx())?;
        check_len("hy", hy.len(), shape.n_hy())?;
        let mut data = Vec::with_capacity(shape.state_len());
        data.extend_from_slice(ez);
        data.extend_from_slice(hx);
        data.extend_from_slice(hy);
        Ok(Self { shape, data })
    }

    /// A state with `E_z(x, y) = f(x, y)` and vanishing magnetic field.
    pub fn from_ez_fn(shape: GridShape, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut s = Self::zeros(shape);
        for j in 0..=shape.ny {
            for i in 0..=shape.nx {
                let k = shape.ez_index(i, j);
                s.data[k] = f(i as f64 * shape.dx(), j as f64 * shape.dy());
            }
        }
        s
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ez(&self) -> &[f64] {
        &self.data[..self.shape.n_ez()]
    }

    pub fn hx(&self) -> &[f64] {
        let o = self.shape.n_ez();
        &self.data[o..o + self.shape.n_hx()]
    }

    pub fn hy(&self) -> &[f64] {
        &self.data[self.shape.n_ez() + self.shape.n_hx()..]
    }

    pub fn ez_mut(&mut self) -> &mut [f64] {
        let n = self.shape.n_ez();
        &mut self.data[..n]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub(crate) fn check_shape(&self, shape: GridShape) -> Result<()> {
        if self.shape != shape {
            return Err(Error::Shape(format!(
                "state on {}x{} grid, expected {}x{}",
                self.shape.nx, self.shape.ny, shape.nx, shape.ny
            )));
        }
        Ok(())
    }
}

impl Vector for StateVector {
    fn as_slice(&self) -> &[f64] {
        &self.data
    }
    fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
    fn zeros_like(&self) -> Self {
        Self::zeros(self.shape)
    }
    fn same_layout(&self, other: &Self) -> bool {
        self.shape == other.shape
    }
}

/// Boundary function sampled at the perimeter nodes, in counterclockwise
/// arc-length order starting at the lower-left corner.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySlice {
    pub values: Vec<f64>,
}

impl BoundarySlice {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl Vector for BoundarySlice {
    fn as_slice(&self) -> &[f64] {
        &self.values
    }
    fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }
    fn zeros_like(&self) -> Self {
        Self::zeros(self.values.len())
    }
}

/// Piecewise-constant boundary control on `[t_{k_s}, T]`: one slice per step
/// midpoint `t_{k+1/2}`, `k = k_s .. nt-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTrajectory {
    start_index: usize,
    n_gamma: usize,
    data: Vec<f64>,
}

impl ControlTrajectory {
    pub fn zeros(start_index: usize, n_slices: usize, n_gamma: usize) -> Self {
        Self { start_index, n_gamma, data: vec![0.0; n_slices * n_gamma] }
    }

    pub fn from_slices(start_index: usize, slices: &[BoundarySlice]) -> Result<Self> {
        let n_gamma = slices.first().map_or(0, |s| s.len());
        let mut data = Vec::with_capacity(n_gamma * slices.len());
        for s in slices {
            check_len("boundary slice", s.len(), n_gamma)?;
            data.extend_from_slice(&s.values);
        }
        Ok(Self { start_index, n_gamma, data })
    }

    pub fn start_index(&self) -> usize {
        self.start_index
    }

    pub fn n_gamma(&self) -> usize {
        self.n_gamma
    }

    pub fn n_slices(&self) -> usize {
        self.data.len().checked_div(self.n_gamma).unwrap_or(0)
    }

    /// One past the last covered step index.
    pub fn end_index(&self) -> usize {
        self.start_index + self.n_slices()
    }

    /// Slice at the midpoint of step `k` (absolute step index).
    pub fn slice(&self, k: usize) -> &[f64] {
        let r = (k - self.start_index) * self.n_gamma;
        &self.data[r..r + self.n_gamma]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        let r = (k - self.start_index) * self.n_gamma;
        &mut self.data[r..r + self.n_gamma]
    }

    /// The part of this trajectory covering steps `k_from ..`.
    pub fn tail(&self, k_from: usize) -> Result<Self> {
        if k_from < self.start_index || k_from > self.end_index() {
            return Err(Error::Shape(format!(
                "tail from step {k_from} outside [{}, {}]",
                self.start_index,
                self.end_index()
            )));
        }
        let r = (k_from - self.start_index) * self.n_gamma;
        Ok(Self { start_index: k_from, n_gamma: self.n_gamma, data: self.data[r..].to_vec() })
    }
}

impl Vector for ControlTrajectory {
    fn as_slice(&self) -> &[f64] {
        &self.data
    }
    fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
    fn zeros_like(&self) -> Self {
        Self { start_index: self.start_index, n_gamma: self.n_gamma, data: vec![0.0; self.data.len()] }
    }
    fn same_layout(&self, other: &Self) -> bool {
        self.start_index == other.start_index
            && self.n_gamma == other.n_gamma
            && self.data.len() == other.data.len()
    }
}

/// States at consecutive time nodes `start_index ..= start_index + len - 1`.
#[derive(Debug, Clone)]
pub struct StateTrajectory {
    pub start_index: usize,
    pub states: Vec<StateVector>,
}

impl StateTrajectory {
    pub fn end_index(&self) -> usize {
        self.start_index + self.states.len() - 1
    }

    /// State at absolute node index `k`.
    pub fn at(&self, k: usize) -> &StateVector {
        &self.states[k - self.start_index]
    }

    pub fn last(&self) -> &StateVector {
        self.states.last().expect("trajectory is never empty")
    }
}

/// Uniform time grid on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_final: f64,
    pub nt: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, nt: usize) -> Result<Self> {
        if nt == 0 || !(t_final > 0.0) || !t_final.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "time grid needs T > 0 and nt >= 1 (got T = {t_final}, nt = {nt})"
            )));
        }
        Ok(Self { t_final, nt })
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.nt as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    pub fn midpoint(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.dt()
    }
}

/// The two inner products of the problem: the `ε/μ`-weighted state product
/// and the `H^{1/2}`-type boundary product `(S f, g)` with
/// `S = (κ I − Δ_Γ)^{1/2}` and arc-length quadrature.
#[derive(Debug, Clone)]
pub struct InnerProducts {
    y_weights: Vec<f64>,
    boundary: BoundaryMesh,
}

impl InnerProducts {
    pub fn new(y_weights: Vec<f64>, boundary: BoundaryMesh) -> Result<Self> {
        if let Some(w) = y_weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter(format!("state weight {w} is not positive")));
        }
        Ok(Self { y_weights, boundary })
    }

    /// Diagonal mass weights of the state product.
    pub fn y_weights(&self) -> &[f64] {
        &self.y_weights
    }

    pub fn boundary(&self) -> &BoundaryMesh {
        &self.boundary
    }

    pub fn inner_y(&self, a: &StateVector, b: &StateVector) -> Result<f64> {
        check_len("state", a.len(), self.y_weights.len())?;
        if !a.same_layout(b) {
            return Err(Error::Shape("states on different grids".into()));
        }
        Ok(self.dot_y(a, b))
    }

    pub(crate) fn dot_y(&self, a: &StateVector, b: &StateVector) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .zip(&self.y_weights)
            .map(|((x, y), w)| w * x * y)
            .sum()
    }

    pub fn norm_y(&self, a: &StateVector) -> f64 {
        self.dot_y(a, a).max(0.0).sqrt()
    }

    /// `(f, g)_U` for single boundary slices.
    pub fn inner_u(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        self.boundary.inner_u(f, g)
    }

    /// `dt Σ_k (S g1_k, g2_k)_Γ` over the common support of two trajectories.
    pub fn inner_u_traj(&self, g1: &ControlTrajectory, g2: &ControlTrajectory, grid: &TimeGrid) -> Result<f64> {
        if !g1.same_layout(g2) {
            return Err(Error::Shape(format!(
                "trajectories cover steps [{}, {}) and [{}, {})",
                g1.start_index(),
                g1.end_index(),
                g2.start_index(),
                g2.end_index()
            )));
        }
        check_len("boundary slice", g1.n_gamma(), self.boundary.len())?;
        let mut acc = 0.0;
        for k in g1.start_index()..g1.end_index() {
            acc += self.boundary.inner_u(g1.slice(k), g2.slice(k))?;
        }
        Ok(grid.dt() * acc)
    }

    pub fn norm_u_traj(&self, g: &ControlTrajectory, grid: &TimeGrid) -> Result<f64> {
        Ok(self.inner_u_traj(g, g, grid)?.max(0.0).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perimeter_is_counterclockwise_and_complete() {
        let shape = GridShape::new(4, 5);
        let p = shape.perimeter_nodes();
        assert_eq!(p.len(), shape.n_gamma());
        assert_eq!(p[0], (0, 0));
        assert_eq!(p[4], (4, 0));
        assert_eq!(p[9], (4, 5));
        assert_eq!(p[13], (0, 5));
        let mut sorted = p.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), p.len());
        // consecutive nodes are grid neighbours
        for k in 0..p.len() {
            let (a, b) = (p[k], p[(k + 1) % p.len()]);
            let d = a.0.abs_diff(b.0) + a.1.abs_diff(b.1);
            assert_eq!(d, 1);
        }
    }

    #[test]
    fn state_field_views() {
        let shape = GridShape::new(4, 4);
        let ez = vec![1.0; shape.n_ez()];
        let hx = vec![2.0; shape.n_hx()];
        let hy = vec![3.0; shape.n_hy()];
        let s = StateVector::from_fields(shape, &ez, &hx, &hy).unwrap();
        assert!(s.ez().iter().all(|&v| v == 1.0));
        assert!(s.hx().iter().all(|&v| v == 2.0));
        assert!(s.hy().iter().all(|&v| v == 3.0));
        assert!(StateVector::from_fields(shape, &ez[1..], &hx, &hy).is_err());
        assert!(StateVector::from_vec(shape, vec![0.0; 3]).is_err());
    }

    #[test]
    fn trajectory_tail_and_slices() {
        let mut g = ControlTrajectory::zeros(2, 4, 3);
        g.slice_mut(4).copy_from_slice(&[1.0, 2.0, 3.0]);
        assert_eq!(g.end_index(), 6);
        let t = g.tail(4).unwrap();
        assert_eq!(t.start_index(), 4);
        assert_eq!(t.n_slices(), 2);
        assert_eq!(t.slice(4), &[1.0, 2.0, 3.0]);
        assert!(g.tail(1).is_err());
    }

    #[test]
    fn time_grid_validation() {
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::new(-1.0, 4).is_err());
        let g = TimeGrid::new(1.0, 64).unwrap();
        assert_eq!(g.dt() * g.nt as f64, 1.0);
        assert_eq!(g.midpoint(0), 0.5 * g.dt());
    }
}
