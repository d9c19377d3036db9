//! Dense brute-force oracles on small grids.
//!
//! Everything here is assembled column by column from the matrix-free
//! operators and then handled with dense linear algebra. The Riccati
//! integrators work in coordinates where both inner products are Euclidean:
//! `ỹ = M^{1/2} y`, `g̃ = G_U^{1/2} g`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::lq::{LqProblem, TerminalWeight};
use crate::maxwell::{Direction, MaxwellOperators};
use crate::space::{BoundarySlice, ControlTrajectory, StateVector, Vector};

/// Largest state dimension the dense oracles accept.
pub const MAX_DENSE_STATE: usize = 2000;
/// Largest number of scalar control unknowns for the dense open-loop oracle.
pub const MAX_DENSE_CONTROL: usize = 5000;

/// Dense matrices of one discrete system in nodal coordinates.
#[derive(Debug, Clone)]
pub struct DenseSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Diagonal of the state mass `M`.
    pub mass: DVector<f64>,
    /// Gram matrix of the boundary product.
    pub u_gram: DMatrix<f64>,
}

/// Riccati matrices at the nodes `k_s ..= nt`, symmetric, in Euclidean
/// coordinates.
#[derive(Debug, Clone)]
pub struct DenseRiccati {
    pub start_index: usize,
    pub p: Vec<DMatrix<f64>>,
}

fn sym_power(m: &DMatrix<f64>, p: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.powf(p)));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

impl DenseSystem {
    pub fn from_ops(ops: &MaxwellOperators) -> Result<Self> {
        let shape = ops.shape();
        let n = shape.state_len();
        if n > MAX_DENSE_STATE {
            return Err(Error::Unsupported(format!("dense oracle limited to {MAX_DENSE_STATE} states, got {n}")));
        }
        let mut a = DMatrix::zeros(n, n);
        let mut e = StateVector::zeros(shape);
        for j in 0..n {
            e.as_mut_slice()[j] = 1.0;
            let col = ops.apply_a(Direction::Forward, &e)?;
            a.set_column(j, &DVector::from_column_slice(col.as_slice()));
            e.as_mut_slice()[j] = 0.0;
        }
        let ng = ops.n_gamma();
        let mut b = DMatrix::zeros(n, ng);
        for j in 0..ng {
            let mut g = BoundarySlice::zeros(ng);
            g.values[j] = 1.0;
            let col = ops.apply_b(&g)?;
            b.set_column(j, &DVector::from_column_slice(col.as_slice()));
        }
        let mass = DVector::from_column_slice(ops.ip().y_weights());
        Ok(Self { a, b, mass, u_gram: ops.boundary().u_gram().clone() })
    }

    pub fn from_parts(a: DMatrix<f64>, b: DMatrix<f64>, mass: DVector<f64>, u_gram: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || mass.len() != n || u_gram.nrows() != b.ncols() || !u_gram.is_square() {
            return Err(Error::Shape("inconsistent dense system".into()));
        }
        Ok(Self { a, b, mass, u_gram })
    }

    pub fn n_state(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_gamma(&self) -> usize {
        self.b.ncols()
    }

    fn m_sqrt(&self) -> DVector<f64> {
        self.mass.map(f64::sqrt)
    }

    /// `M^{-1} Aᵀ M`
    pub fn a_star(&self) -> DMatrix<f64> {
        let mut t = self.a.transpose();
        for i in 0..self.n_state() {
            for j in 0..self.n_state() {
                t[(i, j)] *= self.mass[j] / self.mass[i];
            }
        }
        t
    }

    /// `G_U^{-1} Bᵀ M`
    pub fn b_star(&self) -> DMatrix<f64> {
        let mut btm = self.b.transpose();
        for j in 0..self.n_state() {
            btm.column_mut(j).scale_mut(self.mass[j]);
        }
        self.u_gram.clone().lu().solve(&btm).expect("boundary Gram matrix is invertible")
    }

    /// `(I − dt/2 A)^{-1} (I + dt/2 A)`
    pub fn cayley(&self, dt: f64) -> DMatrix<f64> {
        let id = DMatrix::identity(self.n_state(), self.n_state());
        let minus = &id - &self.a * (0.5 * dt);
        let plus = &id + &self.a * (0.5 * dt);
        minus.lu().solve(&plus).expect("Crank–Nicolson matrix is invertible")
    }

    /// Input matrix of one step: `dt (I − dt/2 A)^{-1} B`.
    pub fn step_input(&self, dt: f64) -> DMatrix<f64> {
        let id = DMatrix::identity(self.n_state(), self.n_state());
        let minus = &id - &self.a * (0.5 * dt);
        minus.lu().solve(&(&self.b * dt)).expect("Crank–Nicolson matrix is invertible")
    }

    /// `n (n I − A)^{-1}`
    pub fn gn(&self, n: f64) -> DMatrix<f64> {
        let id = DMatrix::identity(self.n_state(), self.n_state());
        let shifted = &id * n - &self.a;
        shifted.lu().try_inverse().expect("resolvent exists") * n
    }

    pub fn terminal_matrix(&self, w: &TerminalWeight) -> DMatrix<f64> {
        match w {
            TerminalWeight::Identity => DMatrix::identity(self.n_state(), self.n_state()),
            TerminalWeight::Resolvent { n } => self.gn(*n as f64),
            TerminalWeight::Diagonal(d) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
        }
    }

    /// `M^{1/2} X M^{-1/2}` for a state-to-state matrix.
    fn to_euclid(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let s = self.m_sqrt();
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| s[i] * x[(i, j)] / s[j])
    }

    /// `M^{1/2} X G_U^{-1/2}` for a control-to-state matrix.
    fn input_to_euclid(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let s = self.m_sqrt();
        let mut out = x * sym_power(&self.u_gram, -0.5);
        for i in 0..out.nrows() {
            out.row_mut(i).scale_mut(s[i]);
        }
        out
    }

    fn terminal_euclid(&self, w: &TerminalWeight) -> DMatrix<f64> {
        let g = self.to_euclid(&self.terminal_matrix(w));
        g.transpose() * g
    }

    /// Operator form `M^{-1/2} P̃ M^{1/2}` of a Euclidean Riccati matrix,
    /// acting on nodal states.
    pub fn operator_from_euclid(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let s = self.m_sqrt();
        DMatrix::from_fn(p.nrows(), p.ncols(), |i, j| p[(i, j)] * s[j] / s[i])
    }

    pub fn euclid_state(&self, y: &StateVector) -> DVector<f64> {
        DVector::from_iterator(y.len(), y.as_slice().iter().zip(self.mass.iter()).map(|(v, m)| v * m.sqrt()))
    }

    /// Applies the discrete Cayley propagator `k` times.
    pub fn cayley_power(&self, dt: f64, k: usize, y: &DVector<f64>) -> DVector<f64> {
        let t = self.cayley(dt);
        (0..k).fold(y.clone(), |acc, _| &t * acc)
    }
}

impl DenseRiccati {
    /// `ỹᵀ P̃(t_k) ỹ`, which equals `(P(t_k) y, y)_Y`.
    pub fn quadratic_form(&self, sys: &DenseSystem, k: usize, y: &StateVector) -> f64 {
        let v = sys.euclid_state(y);
        v.dot(&(&self.p[k - self.start_index] * &v))
    }

    pub fn at(&self, k: usize) -> &DMatrix<f64> {
        &self.p[k - self.start_index]
    }
}

fn check_dense(prob: &LqProblem) -> Result<DenseSystem> {
    DenseSystem::from_ops(prob.propagator().ops())
}

/// Integrates the differential Riccati equation
/// `−Ṗ = P Ã + Ãᵀ P − α^{-1} P B̃ B̃ᵀ P`, `P(T) = G̃ᵀ G̃`, backward over the
/// problem's time grid with the classical fourth-order Runge–Kutta scheme.
pub fn dense_dre_oracle(prob: &LqProblem) -> Result<(DenseSystem, DenseRiccati)> {
    let sys = check_dense(prob)?;
    let riccati = dre_backward(&sys, prob.alpha(), &sys.terminal_euclid(prob.terminal()), prob, 1)?;
    Ok((sys, riccati))
}

/// Like [`dense_dre_oracle`] on a system given as dense matrices, with
/// `substeps` Runge–Kutta steps per time step.
pub fn dense_dre_for_system(sys: &DenseSystem, prob: &LqProblem, substeps: usize) -> Result<DenseRiccati> {
    dre_backward(sys, prob.alpha(), &sys.terminal_euclid(prob.terminal()), prob, substeps)
}

fn dre_backward(
    sys: &DenseSystem,
    alpha: f64,
    terminal: &DMatrix<f64>,
    prob: &LqProblem,
    substeps: usize,
) -> Result<DenseRiccati> {
    if substeps == 0 {
        return Err(Error::InvalidParameter("need at least one Runge–Kutta step per time step".into()));
    }
    let a = sys.to_euclid(&sys.a);
    let bt = sys.input_to_euclid(&sys.b);
    let k_mat = &bt * bt.transpose() / alpha;
    let rhs = |p: &DMatrix<f64>| -> DMatrix<f64> {
        let pa = p * &a;
        &pa + pa.transpose() - p * &k_mat * p
    };
    let grid = prob.propagator().grid();
    let h = grid.dt() / substeps as f64;
    let (k_s, nt) = (prob.k_s(), grid.nt);
    let mut p = terminal.clone();
    let mut out = vec![p.clone()];
    for _ in k_s..nt {
        for _ in 0..substeps {
            let k1 = rhs(&p);
            let k2 = rhs(&(&p + &k1 * (0.5 * h)));
            let k3 = rhs(&(&p + &k2 * (0.5 * h)));
            let k4 = rhs(&(&p + &k3 * h));
            p += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            symmetrize(&mut p);
        }
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::NotConverged { iters: out.len(), residual: f64::INFINITY });
        }
        out.push(p.clone());
    }
    out.reverse();
    Ok(DenseRiccati { start_index: k_s, p: out })
}

/// The exact Riccati recursion of the time-discrete problem
/// `y_{k+1} = T y_k + B_d g_k`, cost `α dt Σ ‖g_k‖²_U + ‖G y_N‖²_Y`.
///
/// Its quadratic forms coincide with the matrix-free optimal costs up to
/// rounding.
pub fn dense_discrete_riccati(prob: &LqProblem) -> Result<(DenseSystem, DenseRiccati)> {
    let sys = check_dense(prob)?;
    let grid = prob.propagator().grid();
    let dt = grid.dt();
    let t = sys.to_euclid(&sys.cayley(dt));
    let bd = sys.input_to_euclid(&sys.step_input(dt));
    let r = DMatrix::identity(sys.n_gamma(), sys.n_gamma()) * (prob.alpha() * dt);
    let mut p = sys.terminal_euclid(prob.terminal());
    let mut out = vec![p.clone()];
    for _ in prob.k_s()..grid.nt {
        let pb = &p * &bd;
        let s = &r + bd.transpose() * &pb;
        let chol = Cholesky::new(s).ok_or(Error::Factorization { row: 0, pivot: f64::NAN })?;
        let gain = chol.solve(&(pb.transpose() * &t));
        let tpt = t.transpose() * &p * &t;
        p = tpt - (t.transpose() * &pb) * gain;
        symmetrize(&mut p);
        out.push(p.clone());
    }
    out.reverse();
    Ok((sys, DenseRiccati { start_index: prob.k_s(), p: out }))
}

/// Closed-loop control `g = −α^{-1} B* P(t) y` from a dense Riccati solution,
/// with the closed-loop state advanced by the implicit trapezoid rule.
/// Controls are averaged to the step midpoints and returned in nodal
/// coordinates.
pub fn closed_loop_control(
    sys: &DenseSystem,
    riccati: &DenseRiccati,
    prob: &LqProblem,
    y0: &StateVector,
) -> Result<ControlTrajectory> {
    let grid = prob.propagator().grid();
    let (k_s, nt, dt) = (riccati.start_index, grid.nt, grid.dt());
    let a = sys.to_euclid(&sys.a);
    let bt = sys.input_to_euclid(&sys.b);
    let id = DMatrix::identity(sys.n_state(), sys.n_state());
    let gain = |k: usize| -> DMatrix<f64> { -(bt.transpose() * riccati.at(k)) / prob.alpha() };
    let closed = |k: usize| -> DMatrix<f64> { &a + &bt * gain(k) };
    let back = sym_power(&sys.u_gram, -0.5);
    let mut y = sys.euclid_state(y0);
    let mut out = ControlTrajectory::zeros(k_s, nt - k_s, sys.n_gamma());
    for k in k_s..nt {
        let lhs = &id - closed(k + 1) * (0.5 * dt);
        let rhs = (&id + closed(k) * (0.5 * dt)) * &y;
        let next = lhs.lu().solve(&rhs).ok_or(Error::Factorization { row: 0, pivot: 0.0 })?;
        let g_mid = (gain(k) * &y + gain(k + 1) * &next) * 0.5;
        out.slice_mut(k).copy_from_slice((&back * g_mid).as_slice());
        y = next;
    }
    Ok(out)
}

/// Ground-truth minimizer of the discrete functional by dense normal
/// equations.
pub fn dense_openloop_oracle(prob: &LqProblem, y0: &StateVector) -> Result<ControlTrajectory> {
    let sys = check_dense(prob)?;
    let grid = prob.propagator().grid();
    let (k_s, nt, ng) = (prob.k_s(), grid.nt, sys.n_gamma());
    let n_ctrl = (nt - k_s) * ng;
    if n_ctrl > MAX_DENSE_CONTROL {
        return Err(Error::Unsupported(format!(
            "dense open-loop oracle limited to {MAX_DENSE_CONTROL} control unknowns, got {n_ctrl}"
        )));
    }
    let dt = grid.dt();
    let t = sys.cayley(dt);
    let l = input_matrix(&sys, &t, &sys.step_input(dt), nt - k_s);
    let g = sys.terminal_matrix(prob.terminal());
    let mut gtmg = g.transpose() * DMatrix::from_diagonal(&sys.mass) * &g;
    symmetrize(&mut gtmg);
    let mut h = l.transpose() * &gtmg * &l;
    for blk in 0..nt - k_s {
        let r = blk * ng;
        let mut view = h.view_mut((r, r), (ng, ng));
        view += &sys.u_gram * (prob.alpha() * dt);
    }
    symmetrize(&mut h);
    let free = sys.cayley_power(dt, nt - k_s, &DVector::from_column_slice(y0.as_slice()));
    let rhs = -(l.transpose() * (&gtmg * free));
    let chol = Cholesky::new(h).ok_or(Error::Factorization { row: 0, pivot: f64::NAN })?;
    let sol = chol.solve(&rhs);
    let mut out = ControlTrajectory::zeros(k_s, nt - k_s, ng);
    out.as_mut_slice().copy_from_slice(sol.as_slice());
    Ok(out)
}

/// Dense matrix of `g ↦ y_N` for `steps` steps, columns ordered by step and
/// then by boundary node.
pub fn input_matrix(sys: &DenseSystem, t: &DMatrix<f64>, bd: &DMatrix<f64>, steps: usize) -> DMatrix<f64> {
    let ng = sys.n_gamma();
    let mut l = DMatrix::zeros(sys.n_state(), steps * ng);
    let mut q = bd.clone();
    for blk in (0..steps).rev() {
        l.view_mut((0, blk * ng), (sys.n_state(), ng)).copy_from(&q);
        q = t * q;
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cg::CgConfig;
    use crate::maxwell::{assemble_system, MaterialField};
    use crate::propagation::Propagator;
    use crate::sampling::gaussian_state;
    use crate::space::{GridShape, TimeGrid};
    use std::sync::Arc;

    fn problem(nt: usize, terminal: TerminalWeight) -> LqProblem {
        let shape = GridShape::new(4, 4);
        let ops = assemble_system(shape, MaterialField::uniform(shape, 1.0, 1.0, 0.2), 1.0).unwrap();
        let prop = Propagator::new(Arc::new(ops), TimeGrid::new(1.0, nt).unwrap()).unwrap();
        LqProblem::new(Arc::new(prop), 0, 1.0, terminal, CgConfig::with_tol(1e-12)).unwrap()
    }

    #[test]
    fn stationary_riccati_equation_keeps_terminal_value() {
        let prob = problem(8, TerminalWeight::Identity);
        let sys = DenseSystem::from_ops(prob.propagator().ops()).unwrap();
        let (n, ng) = (sys.n_state(), sys.n_gamma());
        let idle = DenseSystem::from_parts(DMatrix::zeros(n, n), DMatrix::zeros(n, ng), sys.mass.clone(), sys.u_gram.clone())
            .unwrap();
        let ric = dense_dre_for_system(&idle, &prob, 1).unwrap();
        for p in &ric.p {
            assert!((p - DMatrix::<f64>::identity(n, n)).norm() < 1e-14);
        }
    }

    #[test]
    fn discrete_riccati_matches_matrix_free_cost() {
        let prob = problem(8, TerminalWeight::Resolvent { n: 2 });
        let y0 = gaussian_state(prob.propagator().ops().shape(), [0.5, 0.5], 0.3, 1.0);
        let (sys, ric) = dense_discrete_riccati(&prob).unwrap();
        let j = prob.solve_open_loop(&y0).unwrap().cost;
        let form = ric.quadratic_form(&sys, 0, &y0);
        assert!((form - j).abs() <= 1e-9 * j, "{form} vs {j}");
    }

    #[test]
    fn dense_minimizer_matches_cg() {
        let prob = problem(6, TerminalWeight::Identity);
        let y0 = gaussian_state(prob.propagator().ops().shape(), [0.3, 0.6], 0.3, 1.0);
        let dense = dense_openloop_oracle(&prob, &y0).unwrap();
        let mf = prob.solve_open_loop(&y0).unwrap().g_hat;
        let mut d = dense.clone();
        d.axpy(-1.0, &mf);
        let ip = prob.propagator().ops().ip();
        let grid = prob.propagator().grid();
        assert!(ip.norm_u_traj(&d, grid).unwrap() <= 1e-8 * ip.norm_u_traj(&mf, grid).unwrap());
    }
}
