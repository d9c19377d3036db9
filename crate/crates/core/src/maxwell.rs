//! Discrete TM Maxwell system on the unit square.
//!
//! The generator is assembled as a finite-volume curl pair. With `M` the
//! diagonal mass of the state product, `D` the circulation operator from the
//! magnetic unknowns to the electric dual cells and `Σ` the conductivity mass,
//!
//! ```text
//! M A  = [ -Σ   D ]        M A* = [ -Σ  -D ]
//!        [ -Dᵀ  0 ]               [  Dᵀ  0 ]
//! ```
//!
//! so `A*` is the exact `M`-adjoint of `A` and `A* = −A` when `σ = 0`.
//! Tangential `H` vanishes on the perimeter; the boundary control enters as
//! the tangential `H` value in the circulation of the perimeter dual cells.

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::banded::{BandedCholesky, BandedSpd};
use crate::boundary::{BoundaryMesh, FracPower};
use crate::error::{check_len, Error, Result};
use crate::space::{BoundarySlice, GridShape, InnerProducts, StateVector, Vector};

/// Forward (`A`, `B`) or adjoint (`A*`, `B*`) action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Adjoint,
}

/// Scalar isotropic coefficients sampled on the staggered grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialField {
    /// Permittivity at the `E_z` nodes.
    pub eps: Vec<f64>,
    /// Permeability at the `H_x` positions.
    pub mu_x: Vec<f64>,
    /// Permeability at the `H_y` positions.
    pub mu_y: Vec<f64>,
    /// Conductivity at the `E_z` nodes.
    pub sigma: Vec<f64>,
}

impl MaterialField {
    pub fn uniform(shape: GridShape, eps: f64, mu: f64, sigma: f64) -> Self {
        Self {
            eps: vec![eps; shape.n_ez()],
            mu_x: vec![mu; shape.n_hx()],
            mu_y: vec![mu; shape.n_hy()],
            sigma: vec![sigma; shape.n_ez()],
        }
    }

    /// Samples coefficient functions of `(x, y)` at their grid positions.
    pub fn from_fns(
        shape: GridShape,
        eps: impl Fn(f64, f64) -> f64,
        mu: impl Fn(f64, f64) -> f64,
        sigma: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let (dx, dy) = (shape.dx(), shape.dy());
        let mut m = Self::uniform(shape, 1.0, 1.0, 0.0);
        for j in 0..=shape.ny {
            for i in 0..=shape.nx {
                let k = shape.ez_index(i, j);
                let (x, y) = (i as f64 * dx, j as f64 * dy);
                m.eps[k] = eps(x, y);
                m.sigma[k] = sigma(x, y);
            }
        }
        for j in 0..shape.ny {
            for i in 0..=shape.nx {
                m.mu_x[shape.hx_index(i, j) - shape.n_ez()] = mu(i as f64 * dx, (j as f64 + 0.5) * dy);
            }
        }
        for j in 0..=shape.ny {
            for i in 0..shape.nx {
                let k = shape.hy_index(i, j) - shape.n_ez() - shape.n_hx();
                m.mu_y[k] = mu((i as f64 + 0.5) * dx, j as f64 * dy);
            }
        }
        m
    }

    /// `true` when the conductivity vanishes identically.
    pub fn is_conservative(&self) -> bool {
        self.sigma.iter().all(|&s| s == 0.0)
    }

    fn validate(&self, shape: GridShape) -> Result<()> {
        check_len("eps", self.eps.len(), shape.n_ez())?;
        check_len("sigma", self.sigma.len(), shape.n_ez())?;
        check_len("mu_x", self.mu_x.len(), shape.n_hx())?;
        check_len("mu_y", self.mu_y.len(), shape.n_hy())?;
        let positive = |name: &str, v: &[f64]| -> Result<()> {
            match v.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
                Some(x) => Err(Error::InvalidParameter(format!("{name} must be positive and finite, found {x}"))),
                None => Ok(()),
            }
        };
        positive("eps", &self.eps)?;
        positive("mu", &self.mu_x)?;
        positive("mu", &self.mu_y)?;
        if let Some(s) = self.sigma.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be nonnegative and finite, found {s}")));
        }
        Ok(())
    }
}

/// One magnetic unknown and the two dual-cell circulations it enters:
/// `D[plus, h] = +w`, `D[minus, h] = −w`.
#[derive(Debug, Clone, Copy)]
struct CurlEdge {
    h: usize,
    plus: usize,
    minus: usize,
    w: f64,
}

/// Cholesky factor of the electric Schur complement of `λ I − A`, shared by
/// the forward and the adjoint solve.
#[derive(Debug)]
pub struct ShiftedSolver {
    lambda: f64,
    chol: BandedCholesky,
}

impl ShiftedSolver {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// Assembled discrete Maxwell system.
#[derive(Debug)]
pub struct MaxwellOperators {
    shape: GridShape,
    materials: MaterialField,
    ip: InnerProducts,
    edges: Vec<CurlEdge>,
    /// `σ` times the dual-cell area, per `E_z` node.
    sigma_mass: Vec<f64>,
    /// `E_z` index of each perimeter node.
    gamma_nodes: Vec<usize>,
    solvers: Mutex<Vec<Arc<ShiftedSolver>>>,
}

/// Builds the discrete operators for the given grid, materials and boundary
/// shift `κ`.
pub fn assemble_system(shape: GridShape, materials: MaterialField, kappa: f64) -> Result<MaxwellOperators> {
    shape.validate()?;
    materials.validate(shape)?;
    let (nx, ny) = (shape.nx, shape.ny);
    let (dx, dy) = (shape.dx(), shape.dy());
    // half weights on the perimeter lines
    let cx = |i: usize| if i == 0 || i == nx { 0.5 } else { 1.0 };
    let cy = |j: usize| if j == 0 || j == ny { 0.5 } else { 1.0 };

    let mut y_weights = vec![0.0; shape.state_len()];
    let mut sigma_mass = vec![0.0; shape.n_ez()];
    for j in 0..=ny {
        for i in 0..=nx {
            let k = shape.ez_index(i, j);
            let area = dx * dy * cx(i) * cy(j);
            y_weights[k] = materials.eps[k] * area;
            sigma_mass[k] = materials.sigma[k] * area;
        }
    }
    let mut edges = Vec::with_capacity(shape.n_hx() + shape.n_hy());
    for j in 0..ny {
        for i in 0..=nx {
            let h = shape.hx_index(i, j);
            y_weights[h] = materials.mu_x[h - shape.n_ez()] * dx * dy * cx(i);
            edges.push(CurlEdge { h, plus: shape.ez_index(i, j + 1), minus: shape.ez_index(i, j), w: dx * cx(i) });
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            let h = shape.hy_index(i, j);
            y_weights[h] = materials.mu_y[h - shape.n_ez() - shape.n_hx()] * dx * dy * cy(j);
            edges.push(CurlEdge { h, plus: shape.ez_index(i, j), minus: shape.ez_index(i + 1, j), w: dy * cy(j) });
        }
    }
    let boundary = BoundaryMesh::new(shape, kappa)?;
    let gamma_nodes = boundary.nodes().iter().map(|&(i, j)| shape.ez_index(i, j)).collect();
    let ip = InnerProducts::new(y_weights, boundary)?;
    Ok(MaxwellOperators { shape, materials, ip, edges, sigma_mass, gamma_nodes, solvers: Mutex::new(Vec::new()) })
}

impl MaxwellOperators {
    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn materials(&self) -> &MaterialField {
        &self.materials
    }

    pub fn ip(&self) -> &InnerProducts {
        &self.ip
    }

    pub fn boundary(&self) -> &BoundaryMesh {
        self.ip.boundary()
    }

    pub fn n_gamma(&self) -> usize {
        self.gamma_nodes.len()
    }

    pub fn is_conservative(&self) -> bool {
        self.materials.is_conservative()
    }

    fn mass(&self) -> &[f64] {
        self.ip.y_weights()
    }

    /// `out_e += s · D h`
    fn add_curl_h(&self, h: &[f64], out_e: &mut [f64], s: f64) {
        let n_ez = self.shape.n_ez();
        for e in &self.edges {
            let v = s * e.w * h[e.h - n_ez];
            out_e[e.plus] += v;
            out_e[e.minus] -= v;
        }
    }

    /// `(Dᵀ e)` at magnetic unknown of `edge`.
    fn curl_e(e: &[f64], edge: &CurlEdge) -> f64 {
        edge.w * (e[edge.plus] - e[edge.minus])
    }

    /// Applies `A` or `A*`.
    pub fn apply_a(&self, direction: Direction, y: &StateVector) -> Result<StateVector> {
        y.check_shape(self.shape)?;
        Ok(self.apply_a_unchecked(direction, y))
    }

    pub(crate) fn apply_a_unchecked(&self, direction: Direction, y: &StateVector) -> StateVector {
        let n_ez = self.shape.n_ez();
        let sign = match direction {
            Direction::Forward => 1.0,
            Direction::Adjoint => -1.0,
        };
        let src = y.as_slice();
        let mut out = vec![0.0; src.len()];
        let (e_out, h_out) = out.split_at_mut(n_ez);
        self.add_curl_h(&src[n_ez..], e_out, sign);
        let m = self.mass();
        for k in 0..n_ez {
            e_out[k] = (e_out[k] - self.sigma_mass[k] * src[k]) / m[k];
        }
        for edge in &self.edges {
            h_out[edge.h - n_ez] = -sign * Self::curl_e(src, edge) / m[edge.h];
        }
        StateVector::from_vec(self.shape, out).expect("layout preserved")
    }

    /// Boundary injection `B g`: supported on the perimeter `E_z` nodes.
    pub fn apply_b(&self, g: &BoundarySlice) -> Result<StateVector> {
        check_len("boundary slice", g.len(), self.n_gamma())?;
        let mut out = StateVector::zeros(self.shape);
        self.add_b(&mut out, &g.values, 1.0);
        Ok(out)
    }

    /// `y += s · B g`
    pub(crate) fn add_b(&self, y: &mut StateVector, g: &[f64], s: f64) {
        let m = self.ip.y_weights();
        let arc = self.boundary().arc_weights();
        let data = y.as_mut_slice();
        for (k, &node) in self.gamma_nodes.iter().enumerate() {
            data[node] += s * arc[k] * g[k] / m[node];
        }
    }

    /// `B* y = S^{-1} (E_z|_Γ)`, the exact adjoint of [`Self::apply_b`] for the
    /// state and boundary products.
    pub fn apply_b_star(&self, y: &StateVector) -> Result<BoundarySlice> {
        y.check_shape(self.shape)?;
        Ok(BoundarySlice::new(self.b_star_raw(y)))
    }

    pub(crate) fn b_star_raw(&self, y: &StateVector) -> Vec<f64> {
        let data = y.as_slice();
        let trace: Vec<f64> = self.gamma_nodes.iter().map(|&n| data[n]).collect();
        self.boundary().apply_power(FracPower::Minus, &trace)
    }

    /// Perimeter trace of `E_z`.
    pub fn ez_trace(&self, y: &StateVector) -> Result<BoundarySlice> {
        y.check_shape(self.shape)?;
        Ok(BoundarySlice::new(self.gamma_nodes.iter().map(|&n| y.as_slice()[n]).collect()))
    }

    /// Discrete Green map: the static state `(I − A)^{-1} B g`.
    pub fn green_map(&self, g: &BoundarySlice) -> Result<StateVector> {
        let bg = self.apply_b(g)?;
        self.resolvent_solve(1.0, &bg)
    }

    /// `S^{±1}` on a boundary slice.
    pub fn boundary_frac_laplacian(&self, power: FracPower, f: &BoundarySlice) -> Result<BoundarySlice> {
        self.boundary().frac_laplacian(power, f)
    }

    /// Solves `(λ I − A) x = rhs` for `λ ≥ 1`.
    pub fn resolvent_solve(&self, lambda: f64, rhs: &StateVector) -> Result<StateVector> {
        self.resolvent_solve_dir(Direction::Forward, lambda, rhs)
    }

    /// Solves `(λ I − A) x = rhs` or `(λ I − A*) x = rhs` for `λ ≥ 1`.
    pub fn resolvent_solve_dir(&self, direction: Direction, lambda: f64, rhs: &StateVector) -> Result<StateVector> {
        if !(lambda >= 1.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("resolvent parameter must be >= 1, got {lambda}")));
        }
        rhs.check_shape(self.shape)?;
        let solver = self.shifted_solver(lambda)?;
        Ok(self.solve_shifted(&solver, direction, rhs))
    }

    /// Factorization of `λ I − A` for any `λ > 0`, cached per `λ`.
    pub fn shifted_solver(&self, lambda: f64) -> Result<Arc<ShiftedSolver>> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("shift must be positive, got {lambda}")));
        }
        let mut cache = self.solvers.lock().expect("solver cache poisoned");
        if let Some(s) = cache.iter().find(|s| s.lambda.to_bits() == lambda.to_bits()) {
            return Ok(Arc::clone(s));
        }
        let solver = Arc::new(self.factor_shifted(lambda)?);
        cache.push(Arc::clone(&solver));
        Ok(solver)
    }

    /// `K_λ = λ M_e + Σ + λ^{-1} D M_h^{-1} Dᵀ`, banded in the lexicographic
    /// node order.
    fn factor_shifted(&self, lambda: f64) -> Result<ShiftedSolver> {
        let n_ez = self.shape.n_ez();
        let m = self.mass();
        let mut k = BandedSpd::zeros(n_ez, self.shape.nx + 1);
        for i in 0..n_ez {
            k.add(i, i, lambda * m[i] + self.sigma_mass[i]);
        }
        for e in &self.edges {
            let c = e.w * e.w / (lambda * m[e.h]);
            k.add(e.plus, e.plus, c);
            k.add(e.minus, e.minus, c);
            k.add(e.plus, e.minus, -c);
        }
        Ok(ShiftedSolver { lambda, chol: k.factor()? })
    }

    /// Applies `(λ I − A)^{-1}` (forward) or `(λ I − A*)^{-1}` (adjoint).
    pub(crate) fn solve_shifted(&self, solver: &ShiftedSolver, direction: Direction, rhs: &StateVector) -> StateVector {
        let n_ez = self.shape.n_ez();
        let lambda = solver.lambda;
        let sign = match direction {
            Direction::Forward => 1.0,
            Direction::Adjoint => -1.0,
        };
        let m = self.mass();
        let r = rhs.as_slice();
        let mut e: Vec<f64> = (0..n_ez).map(|k| m[k] * r[k]).collect();
        self.add_curl_h(&r[n_ez..], &mut e, sign / lambda);
        solver.chol.solve_in_place(&mut e);
        let mut out = vec![0.0; r.len()];
        out[..n_ez].copy_from_slice(&e);
        for edge in &self.edges {
            out[edge.h] = (r[edge.h] - sign * Self::curl_e(&e, edge) / m[edge.h]) / lambda;
        }
        StateVector::from_vec(self.shape, out).expect("layout preserved")
    }
}
