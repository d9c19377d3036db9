//! The lossless case `σ = 0`: the dual Riccati operator
//!
//! ```text
//! Q(t) = e^{(T−t)A*} e^{(T−t)A} + α^{-1} ∫_t^T e^{(r−t)A*} B B* e^{(r−t)A} dr
//! ```
//!
//! by quadrature on the step nodes, its inverse, and the open-loop pair it
//! produces without any Gram solve.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cg::{cg_solve, CgConfig, CgReport};
use crate::error::{Error, Result};
use crate::lanczos::{lanczos_extremes, RitzBounds};
use crate::lq::{LqProblem, TerminalWeight};
use crate::maxwell::Direction;
use crate::propagation::{Propagator, Record};
use crate::sampling::random_state;
use crate::space::{ControlTrajectory, StateTrajectory, StateVector, Vector};

/// Quadrature of the integral term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// Composite trapezoid on the step nodes.
    #[default]
    Trapezoid,
    /// Midpoint rule on the step-averaged states. With this rule `Q(t_k)` is
    /// exactly the inverse of the time-discrete Riccati operator.
    Midpoint,
}

#[derive(Debug, Clone)]
pub struct QHandle {
    prop: Arc<Propagator>,
    alpha: f64,
    quadrature: Quadrature,
    cg: CgConfig,
}

#[derive(Debug, Clone)]
pub struct QOpenLoop {
    pub g_hat: ControlTrajectory,
    /// `ŷ(t_k) = Q(t_k) e^{t_k A} Q(0)^{-1} y_0` at every node.
    pub y_hat: StateTrajectory,
    pub cg_report: CgReport,
}

impl QHandle {
    pub fn new(prop: Arc<Propagator>, alpha: f64, cg: CgConfig) -> Result<Self> {
        if !prop.ops().is_conservative() {
            return Err(Error::Unsupported("the dual Riccati route needs sigma = 0".into()));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self { prop, alpha, quadrature: Quadrature::Trapezoid, cg })
    }

    pub fn with_quadrature(mut self, quadrature: Quadrature) -> Self {
        self.quadrature = quadrature;
        self
    }

    pub fn propagator(&self) -> &Arc<Propagator> {
        &self.prop
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quadrature
    }

    fn check_step(&self, k_t: usize) -> Result<()> {
        if k_t > self.prop.nt() {
            return Err(Error::InvalidParameter(format!("step {k_t} beyond nt = {}", self.prop.nt())));
        }
        Ok(())
    }

    /// `y ↦ B B* y`
    fn bb_star(&self, y: &StateVector) -> StateVector {
        let ops = self.prop.ops();
        let mut out = StateVector::zeros(ops.shape());
        ops.add_b(&mut out, &ops.b_star_raw(y), 1.0);
        out
    }

    /// `Q(t_k) x`.
    ///
    /// One forward sweep stores `z_j = T^j x`; one backward Horner sweep with
    /// the adjoint step sums the weighted terms `(T*)^j B B* z_j` together
    /// with the group term `(T*)^m z_m`.
    pub fn q_apply(&self, k_t: usize, x: &StateVector) -> Result<StateVector> {
        self.check_step(k_t)?;
        x.check_shape(self.prop.ops().shape())?;
        let m = self.prop.nt() - k_t;
        if m == 0 {
            return Ok(x.clone());
        }
        let dt = self.prop.grid().dt();
        let mut z = Vec::with_capacity(m + 1);
        z.push(x.clone());
        for j in 0..m {
            let next = self.prop.step_forward(&z[j], None);
            z.push(next);
        }
        // acc is kept in units of α/dt so that the integral weights stay O(1)
        let mut acc = z[m].clone();
        acc.scale(self.alpha / dt);
        match self.quadrature {
            Quadrature::Trapezoid => {
                acc.axpy(0.5, &self.bb_star(&z[m]));
                for j in (0..m).rev() {
                    let (_, prev) = self.prop.step_adjoint(&acc);
                    acc = prev;
                    let w = if j == 0 { 0.5 } else { 1.0 };
                    acc.axpy(w, &self.bb_star(&z[j]));
                }
            }
            Quadrature::Midpoint => {
                // acc ← T* acc + C^{-*} b = C^{-*}(2 acc + b) − acc
                for j in (0..m).rev() {
                    let mut mid = z[j].clone();
                    mid.axpy(1.0, &z[j + 1]);
                    mid.scale(0.5);
                    let mut rhs = acc.clone();
                    rhs.scale(2.0);
                    rhs.axpy(1.0, &self.bb_star(&mid));
                    let (mut next, _) = self.prop.step_adjoint(&rhs);
                    next.axpy(-1.0, &acc);
                    acc = next;
                }
            }
        }
        acc.scale(dt / self.alpha);
        Ok(acc)
    }

    /// `Q(t_k)^{-1} x` by conjugate gradients in the state product.
    pub fn q_inverse_apply(&self, k_t: usize, x: &StateVector) -> Result<(StateVector, CgReport)> {
        self.check_step(k_t)?;
        let ip = self.prop.ops().ip();
        cg_solve(
            |v| self.q_apply(k_t, v),
            x,
            |a, b| ip.dot_y(a, b),
            self.cg.tol,
            self.cg.max_iter_for(x.len()),
        )
    }

    /// The optimal pair from `Q`: `ĝ = −α^{-1} B* z`, `ŷ(t_k) = Q(t_k) z^k`,
    /// `z^k = T^k Q(0)^{-1} y_0`, with `B*` taken at step averages.
    pub fn openloop_via_q(&self, y0: &StateVector) -> Result<QOpenLoop> {
        let nt = self.prop.nt();
        let (w0, cg_report) = self.q_inverse_apply(0, y0)?;
        let z = self.prop.propagate(Direction::Forward, &w0, 0, nt, None, Record::Full)?;
        let ops = self.prop.ops();
        let mut g_hat = ControlTrajectory::zeros(0, nt, ops.n_gamma());
        for k in 0..nt {
            let mut mid = z.at(k).clone();
            mid.axpy(1.0, z.at(k + 1));
            mid.scale(-0.5 / self.alpha);
            g_hat.slice_mut(k).copy_from_slice(&ops.b_star_raw(&mid));
        }
        let states = (0..=nt).map(|k| self.q_apply(k, z.at(k))).collect::<Result<Vec<_>>>()?;
        Ok(QOpenLoop { g_hat, y_hat: StateTrajectory { start_index: 0, states }, cg_report })
    }

    /// `|d/dt (Q x, y) − (Q x, A* y) − (A* x, Q y) + α^{-1} (B* x, B* y)_U|`
    /// at `t_k`, the derivative by central differences, divided by
    /// `‖x‖ ‖y‖`.
    pub fn dual_re_residual(&self, k_t: usize, x: &StateVector, y: &StateVector) -> Result<f64> {
        if k_t == 0 || k_t >= self.prop.nt() {
            return Err(Error::InvalidParameter(format!(
                "dual Riccati residual needs an interior step, got {k_t}"
            )));
        }
        let ops = self.prop.ops();
        let ip = ops.ip();
        let dt = self.prop.grid().dt();
        let lhs = (ip.inner_y(&self.q_apply(k_t + 1, x)?, y)? - ip.inner_y(&self.q_apply(k_t - 1, x)?, y)?) / (2.0 * dt);
        let qx = self.q_apply(k_t, x)?;
        let qy = self.q_apply(k_t, y)?;
        let rhs = ip.dot_y(&qx, &ops.apply_a(Direction::Adjoint, y)?) + ip.dot_y(&ops.apply_a(Direction::Adjoint, x)?, &qy)
            - ip.inner_u(&ops.b_star_raw(x), &ops.b_star_raw(y))? / self.alpha;
        let scale = ip.norm_y(x) * ip.norm_y(y);
        Ok(if scale == 0.0 { 0.0 } else { (lhs - rhs).abs() / scale })
    }

    /// `max_z ‖P(t_k) Q(t_k) z − z‖ / ‖z‖` with `P` from the regulator
    /// problem `prob`, which must share the propagator, `α` and `G = I`.
    pub fn pq_identity_check(&self, prob: &LqProblem, k_t: usize, probes: &[StateVector]) -> Result<f64> {
        if !Arc::ptr_eq(prob.propagator(), &self.prop)
            || prob.alpha() != self.alpha
            || *prob.terminal() != TerminalWeight::Identity
        {
            return Err(Error::InvalidParameter(
                "P·Q check needs the same propagator and alpha, and G = I".into(),
            ));
        }
        let ip = self.prop.ops().ip();
        let mut worst: f64 = 0.0;
        for z in probes {
            let mut d = prob.riccati_apply(k_t, &self.q_apply(k_t, z)?)?;
            d.axpy(-1.0, z);
            let n = ip.norm_y(z);
            if n > 0.0 {
                worst = worst.max(ip.norm_y(&d) / n);
            }
        }
        Ok(worst)
    }

    /// `‖(T*)^m T^m x − x‖ / ‖x‖`, `m = nt − k_t`.
    pub fn group_term_error(&self, k_t: usize, x: &StateVector) -> Result<f64> {
        self.check_step(k_t)?;
        let nt = self.prop.nt();
        let there = self.prop.free_evolution(x, k_t, nt)?;
        let mut back = self.prop.adjoint_evolution(&there, k_t, nt)?;
        back.axpy(-1.0, x);
        let ip = self.prop.ops().ip();
        Ok(ip.norm_y(&back) / ip.norm_y(x))
    }

    /// Extreme Ritz values of `Q(t_k)`.
    pub fn spectrum_estimate(&self, k_t: usize, n_iter: usize, seed: u64) -> Result<RitzBounds> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = random_state(self.prop.ops().shape(), &mut rng);
        let ip = self.prop.ops().ip();
        lanczos_extremes(|x| self.q_apply(k_t, x), &start, |a, b| ip.dot_y(a, b), n_iter)
    }
}
