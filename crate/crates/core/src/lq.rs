//! The finite-horizon regulator problem
//! `J_s(g) = α ∫_s^T ‖g‖²_U dt + ‖G y(T)‖²_Y`, its open-loop minimizer, the
//! optimal evolution, and the matrix-free Riccati operator.
//!
//! The minimizer solves `Λ_{sT} ĝ = −L_{sT}* G*G e^{(T−s)A} y_0` with the Gram
//! operator `Λ_{sT} = α I + L_{sT}* G*G L_{sT}`. The Riccati operator is never
//! assembled: `P(t) x = e^{(T−t)A*} G*G Φ(T, t) x` needs one inner solve.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cg::{cg_solve, CgConfig, CgReport};
use crate::error::{check_len, Error, Result};
use crate::lanczos::{lanczos_extremes, RitzBounds};
use crate::maxwell::Direction;
use crate::propagation::{Propagator, Record};
use crate::sampling::random_state;
use crate::space::{ControlTrajectory, StateTrajectory, StateVector, Vector};

/// The terminal observation `G`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalWeight {
    /// `G = I`.
    Identity,
    /// `G_n = n (n I − A)^{-1}`.
    Resolvent { n: u32 },
    /// Pointwise multiplication by the given weights, one per state entry.
    Diagonal(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct LqProblem {
    prop: Arc<Propagator>,
    k_s: usize,
    alpha: f64,
    terminal: TerminalWeight,
    cg: CgConfig,
}

#[derive(Debug, Clone)]
pub struct OpenLoopSolution {
    pub g_hat: ControlTrajectory,
    /// Optimal states at nodes `k_s ..= nt`.
    pub y_hat: StateTrajectory,
    pub cost: f64,
    pub cg_report: CgReport,
}

/// Relative feedback residuals `‖ĝ_k + α^{-1} B* P ŷ‖_U / ‖ĝ‖_{L²U}`.
#[derive(Debug, Clone, Serialize)]
pub struct FeedbackReport {
    pub steps: Vec<usize>,
    /// `P ŷ` from the single adjoint sweep started at `G*G ŷ(T)`.
    pub cheap: Vec<f64>,
    /// `P ŷ` from fresh Riccati applications.
    pub independent: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TransitionReport {
    pub state_error: f64,
    pub control_error: f64,
}

impl LqProblem {
    pub fn new(prop: Arc<Propagator>, k_s: usize, alpha: f64, terminal: TerminalWeight, cg: CgConfig) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        if k_s >= prop.nt() {
            return Err(Error::InvalidParameter(format!("initial step {k_s} must be below nt = {}", prop.nt())));
        }
        match &terminal {
            TerminalWeight::Identity => {}
            TerminalWeight::Resolvent { n } => {
                if *n == 0 {
                    return Err(Error::InvalidParameter("resolvent index n must be >= 1".into()));
                }
            }
            TerminalWeight::Diagonal(d) => {
                check_len("terminal weights", d.len(), prop.ops().shape().state_len())?;
                if d.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter("terminal weights must be finite".into()));
                }
            }
        }
        Ok(Self { prop, k_s, alpha, terminal, cg })
    }

    pub fn propagator(&self) -> &Arc<Propagator> {
        &self.prop
    }

    pub fn k_s(&self) -> usize {
        self.k_s
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn terminal(&self) -> &TerminalWeight {
        &self.terminal
    }

    pub fn cg_config(&self) -> CgConfig {
        self.cg
    }

    /// The same problem posed from step `k_s`.
    pub fn starting_at(&self, k_s: usize) -> Result<Self> {
        Self::new(Arc::clone(&self.prop), k_s, self.alpha, self.terminal.clone(), self.cg)
    }

    /// The same problem with a different terminal weight.
    pub fn with_terminal(&self, terminal: TerminalWeight) -> Result<Self> {
        Self::new(Arc::clone(&self.prop), self.k_s, self.alpha, terminal, self.cg)
    }

    fn nt(&self) -> usize {
        self.prop.nt()
    }

    /// `G y`
    pub fn terminal_apply(&self, y: &StateVector) -> Result<StateVector> {
        self.terminal_dir(Direction::Forward, y)
    }

    fn terminal_dir(&self, direction: Direction, y: &StateVector) -> Result<StateVector> {
        y.check_shape(self.prop.ops().shape())?;
        match &self.terminal {
            TerminalWeight::Identity => Ok(y.clone()),
            TerminalWeight::Resolvent { n } => {
                let n = *n as f64;
                let mut out = self.prop.ops().resolvent_solve_dir(direction, n, y)?;
                out.scale(n);
                Ok(out)
            }
            TerminalWeight::Diagonal(d) => {
                let mut out = y.clone();
                for (v, w) in out.as_mut_slice().iter_mut().zip(d) {
                    *v *= w;
                }
                Ok(out)
            }
        }
    }

    /// `G*G y`
    pub fn terminal_gram(&self, y: &StateVector) -> Result<StateVector> {
        let gy = self.terminal_dir(Direction::Forward, y)?;
        self.terminal_dir(Direction::Adjoint, &gy)
    }

    fn check_control(&self, g: &ControlTrajectory) -> Result<()> {
        if g.start_index() != self.k_s || g.end_index() != self.nt() || g.n_gamma() != self.prop.ops().n_gamma() {
            return Err(Error::Shape(format!(
                "control covers [{}, {}) with {} boundary nodes, problem needs [{}, {}) with {}",
                g.start_index(),
                g.end_index(),
                g.n_gamma(),
                self.k_s,
                self.nt(),
                self.prop.ops().n_gamma()
            )));
        }
        Ok(())
    }

    fn norm_u(&self, g: &ControlTrajectory) -> f64 {
        self.prop.ops().ip().norm_u_traj(g, self.prop.grid()).expect("layout checked")
    }

    fn dot_u(&self, a: &ControlTrajectory, b: &ControlTrajectory) -> f64 {
        self.prop.ops().ip().inner_u_traj(a, b, self.prop.grid()).expect("layout checked")
    }

    /// `α ‖g‖²_{L²U} + ‖G y(T)‖²_Y` with `y` driven from `y0` at `k_s`.
    pub fn evaluate_cost(&self, g: &ControlTrajectory, y0: &StateVector) -> Result<f64> {
        self.check_control(g)?;
        let traj = self.prop.propagate(Direction::Forward, y0, self.k_s, self.nt(), Some(g), Record::FinalOnly)?;
        let gy = self.terminal_apply(traj.last())?;
        let ng = self.norm_u(g);
        Ok(self.alpha * ng * ng + self.prop.ops().ip().dot_y(&gy, &gy))
    }

    /// `Λ_{sT} g = α g + L_{sT}* G*G L_{sT} g`
    pub fn gram_apply(&self, g: &ControlTrajectory) -> Result<ControlTrajectory> {
        self.check_control(g)?;
        let lg = self.prop.input_map(g)?;
        let mut out = self.prop.adjoint_input_map(&self.terminal_gram(&lg)?, self.k_s)?;
        out.axpy(self.alpha, g);
        Ok(out)
    }

    /// Minimizes `J_s` for the initial state `y0` at `k_s`.
    pub fn solve_open_loop(&self, y0: &StateVector) -> Result<OpenLoopSolution> {
        let free = self.prop.free_evolution(y0, self.k_s, self.nt())?;
        let mut rhs = self.prop.adjoint_input_map(&self.terminal_gram(&free)?, self.k_s)?;
        rhs.scale(-1.0);
        let dim = rhs.as_slice().len();
        let (g_hat, cg_report) = cg_solve(
            |g| self.gram_apply(g),
            &rhs,
            |a, b| self.dot_u(a, b),
            self.cg.tol,
            self.cg.max_iter_for(dim),
        )?;
        let y_hat = self.prop.propagate(Direction::Forward, y0, self.k_s, self.nt(), Some(&g_hat), Record::Full)?;
        let gy = self.terminal_apply(y_hat.last())?;
        let ng = self.norm_u(&g_hat);
        let cost = self.alpha * ng * ng + self.prop.ops().ip().dot_y(&gy, &gy);
        Ok(OpenLoopSolution { g_hat, y_hat, cost, cg_report })
    }

    /// `P(t_k) x = e^{(T−t_k)A*} G*G Φ(T, t_k) x` for `k_s ≤ k ≤ nt`; at
    /// `k = nt` this is the terminal value `G*G x`.
    pub fn riccati_apply(&self, k_t: usize, x: &StateVector) -> Result<StateVector> {
        if k_t < self.k_s || k_t > self.nt() {
            return Err(Error::InvalidParameter(format!(
                "Riccati time step {k_t} outside [{}, {}]",
                self.k_s,
                self.nt()
            )));
        }
        if k_t == self.nt() {
            return self.terminal_gram(x);
        }
        let sol = self.starting_at(k_t)?.solve_open_loop(x)?;
        let z = self.terminal_gram(sol.y_hat.last())?;
        self.prop.adjoint_evolution(&z, k_t, self.nt())
    }

    /// Compares `ĝ` at the midpoints of `steps` with
    /// `−α^{-1} B* (P(t_k) ŷ^k + P(t_{k+1}) ŷ^{k+1}) / 2`.
    pub fn feedback_residual(&self, y0: &StateVector, steps: &[usize]) -> Result<FeedbackReport> {
        if let Some(&k) = steps.iter().find(|&&k| k <= self.k_s || k >= self.nt()) {
            return Err(Error::InvalidParameter(format!(
                "sample step {k} outside ({}, {})",
                self.k_s,
                self.nt()
            )));
        }
        let sol = self.solve_open_loop(y0)?;
        let g_norm = self.norm_u(&sol.g_hat);
        let ops = self.prop.ops();
        let boundary = ops.boundary();
        let relative = |k: usize, p_mid: &StateVector| -> Result<f64> {
            if g_norm == 0.0 {
                return Ok(0.0);
            }
            let mut r = ops.b_star_raw(p_mid);
            for (ri, gi) in r.iter_mut().zip(sol.g_hat.slice(k)) {
                *ri = gi + *ri / self.alpha;
            }
            Ok(boundary.inner_u(&r, &r)?.max(0.0).sqrt() / g_norm)
        };
        let (_, sweep) = self.prop.adjoint_sweep(&self.terminal_gram(sol.y_hat.last())?, self.k_s)?;
        let mut cheap = Vec::with_capacity(steps.len());
        let mut independent = Vec::with_capacity(steps.len());
        for &k in steps {
            let mut mid = sweep.at(k).clone();
            mid.axpy(1.0, sweep.at(k + 1));
            mid.scale(0.5);
            cheap.push(relative(k, &mid)?);

            let mut mid = self.riccati_apply(k, sol.y_hat.at(k))?;
            mid.axpy(1.0, &self.riccati_apply(k + 1, sol.y_hat.at(k + 1))?);
            mid.scale(0.5);
            independent.push(relative(k, &mid)?);
        }
        Ok(FeedbackReport { steps: steps.to_vec(), cheap, independent })
    }

    /// Splits the optimal evolution at `k_tau` and compares the restarted
    /// solution with the original one at `k_t` and on `[k_tau, T]`.
    pub fn transition_check(&self, y0: &StateVector, k_tau: usize, k_t: usize) -> Result<TransitionReport> {
        if !(self.k_s <= k_tau && k_tau <= k_t && k_t <= self.nt()) {
            return Err(Error::InvalidParameter(format!(
                "need {} <= k_tau = {k_tau} <= k_t = {k_t} <= {}",
                self.k_s,
                self.nt()
            )));
        }
        let y_norm = self.prop.ops().ip().norm_y(y0);
        if y_norm == 0.0 || k_tau == self.k_s || k_tau == self.nt() {
            return Ok(TransitionReport { state_error: 0.0, control_error: 0.0 });
        }
        let full = self.solve_open_loop(y0)?;
        let restarted = self.starting_at(k_tau)?.solve_open_loop(full.y_hat.at(k_tau))?;
        let mut dy = restarted.y_hat.at(k_t).clone();
        dy.axpy(-1.0, full.y_hat.at(k_t));
        let mut dg = full.g_hat.tail(k_tau)?;
        dg.axpy(-1.0, &restarted.g_hat);
        let g_norm = self.norm_u(&full.g_hat);
        let dg_norm = self.prop.ops().ip().norm_u_traj(&dg, self.prop.grid())?;
        Ok(TransitionReport {
            state_error: self.prop.ops().ip().norm_y(&dy) / y_norm,
            control_error: if g_norm == 0.0 { 0.0 } else { dg_norm / g_norm },
        })
    }

    /// Extreme Ritz values of `P(t_k)` after `n_iter` Lanczos steps from a
    /// seeded random start.
    pub fn coercivity_estimate(&self, k_t: usize, n_iter: usize, seed: u64) -> Result<RitzBounds> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = random_state(self.prop.ops().shape(), &mut rng);
        let ip = self.prop.ops().ip();
        lanczos_extremes(|x| self.riccati_apply(k_t, x), &start, |a, b| ip.dot_y(a, b), n_iter)
    }
}
