//! Crank–Nicolson realization of the semigroups, the input-to-state maps and
//! their adjoints.
//!
//! One forward step solves
//! `(I − dt/2 A) y^{k+1} = (I + dt/2 A) y^k + dt B g_{k+1/2}`.
//! The adjoint sweep runs the same scheme for `A*` backward in time and
//! evaluates `B*` at the step average `(z^k + z^{k+1}) / 2`. That average is
//! exactly `(I − dt/2 A*)^{-1} z^{k+1}`, which makes the discrete `L_{sT}*`
//! the true adjoint of the discrete `L_{sT}` in the state and control products.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::maxwell::{Direction, MaxwellOperators, ShiftedSolver};
use crate::sampling::random_state;
use crate::space::{ControlTrajectory, StateTrajectory, StateVector, TimeGrid, Vector};

/// Whether [`Propagator::propagate`] keeps every node or only the end state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Record {
    Full,
    FinalOnly,
}

#[derive(Debug)]
pub struct Propagator {
    ops: Arc<MaxwellOperators>,
    grid: TimeGrid,
    cn: Arc<ShiftedSolver>,
}

/// Sampled admissibility ratios `∫ ‖B* e^{tA*} x‖²_U dt / ‖x‖²_Y`.
#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    pub max_ratio: f64,
    pub ratios: Vec<f64>,
}

impl Propagator {
    pub fn new(ops: Arc<MaxwellOperators>, grid: TimeGrid) -> Result<Self> {
        let cn = ops.shifted_solver(2.0 / grid.dt())?;
        Ok(Self { ops, grid, cn })
    }

    pub fn ops(&self) -> &MaxwellOperators {
        &self.ops
    }

    pub fn ops_arc(&self) -> &Arc<MaxwellOperators> {
        &self.ops
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn nt(&self) -> usize {
        self.grid.nt
    }

    /// One forward step, with optional control slice at the step midpoint.
    pub fn step_forward(&self, y: &StateVector, g: Option<&[f64]>) -> StateVector {
        let lambda = self.cn.lambda();
        let mut rhs = y.clone();
        rhs.scale(2.0);
        if let Some(g) = g {
            self.ops.add_b(&mut rhs, g, self.grid.dt());
        }
        let mut next = self.ops.solve_shifted(&self.cn, Direction::Forward, &rhs);
        next.scale(lambda);
        next.axpy(-1.0, y);
        next
    }

    /// One backward adjoint step from node `k + 1` to node `k`. Returns the
    /// step average `(z^k + z^{k+1}) / 2` and `z^k`.
    pub fn step_adjoint(&self, z: &StateVector) -> (StateVector, StateVector) {
        let mut mid = self.ops.solve_shifted(&self.cn, Direction::Adjoint, z);
        mid.scale(self.cn.lambda());
        let mut prev = mid.clone();
        prev.scale(2.0);
        prev.axpy(-1.0, z);
        (mid, prev)
    }

    fn check_range(&self, k_from: usize, k_to: usize) -> Result<()> {
        if k_from >= k_to || k_to > self.grid.nt {
            return Err(Error::InvalidParameter(format!(
                "step range [{k_from}, {k_to}] invalid for nt = {}",
                self.grid.nt
            )));
        }
        Ok(())
    }

    /// Propagates between nodes `k_from < k_to`.
    ///
    /// Forward: `y_init` sits at `k_from`, the control (if any) must cover
    /// `[k_from, k_to)`. Adjoint: `y_init` sits at `k_to` and the `A*` scheme
    /// runs backward to `k_from`, without control. States are returned in
    /// increasing node order.
    pub fn propagate(
        &self,
        direction: Direction,
        y_init: &StateVector,
        k_from: usize,
        k_to: usize,
        g: Option<&ControlTrajectory>,
        record: Record,
    ) -> Result<StateTrajectory> {
        self.check_range(k_from, k_to)?;
        y_init.check_shape(self.ops.shape())?;
        match direction {
            Direction::Forward => {
                if let Some(g) = g {
                    if g.start_index() > k_from || g.end_index() < k_to || g.n_gamma() != self.ops.n_gamma() {
                        return Err(Error::Shape(format!(
                            "control covers [{}, {}) with {} boundary nodes, need [{k_from}, {k_to}) with {}",
                            g.start_index(),
                            g.end_index(),
                            g.n_gamma(),
                            self.ops.n_gamma()
                        )));
                    }
                }
                let mut states = Vec::new();
                let mut y = y_init.clone();
                for k in k_from..k_to {
                    let next = self.step_forward(&y, g.map(|g| g.slice(k)));
                    if record == Record::Full {
                        states.push(std::mem::replace(&mut y, next));
                    } else {
                        y = next;
                    }
                }
                states.push(y);
                let start_index = if record == Record::Full { k_from } else { k_to };
                Ok(StateTrajectory { start_index, states })
            }
            Direction::Adjoint => {
                if g.is_some() {
                    return Err(Error::Unsupported("the adjoint sweep carries no control term".into()));
                }
                let mut states = Vec::new();
                let mut z = y_init.clone();
                for _ in (k_from..k_to).rev() {
                    let (_, prev) = self.step_adjoint(&z);
                    if record == Record::Full {
                        states.push(std::mem::replace(&mut z, prev));
                    } else {
                        z = prev;
                    }
                }
                states.push(z);
                states.reverse();
                Ok(StateTrajectory { start_index: k_from, states })
            }
        }
    }

    /// `e^{(t_{k_to} − t_{k_from}) A} y` on the discrete level; identity when
    /// the range is empty.
    pub fn free_evolution(&self, y: &StateVector, k_from: usize, k_to: usize) -> Result<StateVector> {
        if k_from == k_to {
            return Ok(y.clone());
        }
        Ok(self.propagate(Direction::Forward, y, k_from, k_to, None, Record::FinalOnly)?.last().clone())
    }

    /// `e^{(t_{k_to} − t_{k_from}) A*} z`, run backward from `k_to`.
    pub fn adjoint_evolution(&self, z: &StateVector, k_from: usize, k_to: usize) -> Result<StateVector> {
        if k_from == k_to {
            return Ok(z.clone());
        }
        Ok(self.propagate(Direction::Adjoint, z, k_from, k_to, None, Record::FinalOnly)?.states[0].clone())
    }

    /// `L_{sT} g = (L_s g)(T)` with `s` the start of `g`.
    pub fn input_map(&self, g: &ControlTrajectory) -> Result<StateVector> {
        let k_s = g.start_index();
        let zero = StateVector::zeros(self.ops.shape());
        Ok(self.propagate(Direction::Forward, &zero, k_s, self.grid.nt, Some(g), Record::FinalOnly)?.last().clone())
    }

    /// `(L_{sT}* z)(t_{k+1/2}) = B* (z^k + z^{k+1}) / 2` with `z` the backward
    /// adjoint sweep from `z^{nt} = terminal`.
    pub fn adjoint_input_map(&self, terminal: &StateVector, k_s: usize) -> Result<ControlTrajectory> {
        Ok(self.adjoint_sweep(terminal, k_s)?.0)
    }

    /// Adjoint sweep returning `L_{sT}* z` and the adjoint states at nodes
    /// `k_s ..= nt`.
    pub fn adjoint_sweep(&self, terminal: &StateVector, k_s: usize) -> Result<(ControlTrajectory, StateTrajectory)> {
        let nt = self.grid.nt;
        if k_s >= nt {
            return Err(Error::InvalidParameter(format!("initial step {k_s} must be below nt = {nt}")));
        }
        terminal.check_shape(self.ops.shape())?;
        let mut out = ControlTrajectory::zeros(k_s, nt - k_s, self.ops.n_gamma());
        let mut states = Vec::with_capacity(nt - k_s + 1);
        let mut z = terminal.clone();
        for k in (k_s..nt).rev() {
            let (mid, prev) = self.step_adjoint(&z);
            out.slice_mut(k).copy_from_slice(&self.ops.b_star_raw(&mid));
            states.push(std::mem::replace(&mut z, prev));
        }
        states.push(z);
        states.reverse();
        Ok((out, StateTrajectory { start_index: k_s, states }))
    }

    /// Estimates the admissibility constant from below.
    ///
    /// Each sample starts from a random unit state and is refined by
    /// `power_steps` power iterations of `x ↦ L_T L_T* x`; the reported ratio is
    /// the Rayleigh quotient `‖L_T* x‖² / ‖x‖²`, a lower bound for `c_T`.
    pub fn admissibility_ratio(&self, n_samples: usize, seed: u64, power_steps: usize) -> Result<AdmissibilityReport> {
        if n_samples == 0 {
            return Err(Error::InvalidParameter("need at least one sample".into()));
        }
        let ip = self.ops.ip();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ratios = Vec::with_capacity(n_samples);
        for _ in 0..n_samples {
            let mut x = random_state(self.ops.shape(), &mut rng);
            x.scale(1.0 / ip.norm_y(&x));
            for _ in 0..power_steps {
                let mut next = self.input_map(&self.adjoint_input_map(&x, 0)?)?;
                let n = ip.norm_y(&next);
                if n == 0.0 {
                    break;
                }
                next.scale(1.0 / n);
                x = next;
            }
            let lx = self.adjoint_input_map(&x, 0)?;
            ratios.push(ip.inner_u_traj(&lx, &lx, &self.grid)? / ip.dot_y(&x, &x));
        }
        let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
        Ok(AdmissibilityReport { max_ratio, ratios })
    }
}
