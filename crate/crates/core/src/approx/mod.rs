//! Resolvent approximants of the identity `G_n = n R(n, A)`, the smoothed
//! problems they define, and the study of their convergence as `n → ∞`.

pub mod dense;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lq::{LqProblem, OpenLoopSolution, TerminalWeight};
use crate::maxwell::{Direction, MaxwellOperators};
use crate::space::{StateVector, Vector};

/// `G_n y = n (n I − A)^{-1} y`
pub fn gn_apply(ops: &MaxwellOperators, n: u32, y: &StateVector) -> Result<StateVector> {
    gn_dir(ops, Direction::Forward, n, y)
}

/// `G_n* y = n (n I − A*)^{-1} y`
pub fn gn_adjoint_apply(ops: &MaxwellOperators, n: u32, y: &StateVector) -> Result<StateVector> {
    gn_dir(ops, Direction::Adjoint, n, y)
}

fn gn_dir(ops: &MaxwellOperators, direction: Direction, n: u32, y: &StateVector) -> Result<StateVector> {
    if n == 0 {
        return Err(Error::InvalidParameter("resolvent index n must be >= 1".into()));
    }
    let mut out = ops.resolvent_solve_dir(direction, n as f64, y)?;
    out.scale(n as f64);
    Ok(out)
}

/// The base problem with terminal weight `G_n`.
pub fn solve_problem_n(base: &LqProblem, n: u32, y0: &StateVector) -> Result<OpenLoopSolution> {
    base.with_terminal(TerminalWeight::Resolvent { n })?.solve_open_loop(y0)
}

/// Distances between the smoothed and the reference solutions, one row per
/// `n`.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub n: u32,
    /// `‖ĝ_n − ĝ‖_{L²U}`
    pub control_error: f64,
    /// `max_k ‖ŷ_n(t_k) − ŷ(t_k)‖_Y`
    pub state_error: f64,
    /// `|J_n(ĝ_n) − J(ĝ)|`
    pub cost_error: f64,
    /// `‖P_n(t) z − P(t) z‖_Y`, indexed by Riccati time then probe.
    pub riccati_errors: Vec<Vec<f64>>,
    pub cg_iters: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Steps at which `P_n` and `P` are compared.
    pub riccati_steps: Vec<usize>,
    pub control_norm: f64,
    pub state_norm: f64,
    pub cost: f64,
    pub probe_norms: Vec<f64>,
}

impl ConvergenceTable {
    /// CSV with one row per `n`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,control_error,state_error,cost_error");
        for k in &self.riccati_steps {
            for j in 0..self.probe_norms.len() {
                out.push_str(&format!(",riccati_error_k{k}_z{j}"));
            }
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{},{:e},{:e},{:e}", r.n, r.control_error, r.state_error, r.cost_error));
            for per_step in &r.riccati_errors {
                for e in per_step {
                    out.push_str(&format!(",{e:e}"));
                }
            }
            out.push('\n');
        }
        out
    }

    /// Largest relative Riccati error over probes in row `i` at Riccati step
    /// index `s`.
    pub fn relative_riccati_error(&self, i: usize, s: usize) -> f64 {
        self.rows[i].riccati_errors[s]
            .iter()
            .zip(&self.probe_norms)
            .map(|(e, z)| if *z == 0.0 { 0.0 } else { e / z })
            .fold(0.0, f64::max)
    }
}

/// Solves the reference problem and the smoothed problems for every `n` in
/// `n_list` and tabulates the differences. The `n` values are processed in
/// parallel; rows come back in the order of `n_list`.
pub fn convergence_study(
    base: &LqProblem,
    y0: &StateVector,
    n_list: &[u32],
    probes: &[StateVector],
    riccati_steps: &[usize],
) -> Result<ConvergenceTable> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("n_list must be nonempty and strictly increasing".into()));
    }
    let prop = base.propagator();
    let ip = prop.ops().ip();
    let grid = prop.grid();
    let reference = base.solve_open_loop(y0)?;
    let reference_p: Vec<Vec<StateVector>> = riccati_steps
        .iter()
        .map(|&k| probes.iter().map(|z| base.riccati_apply(k, z)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;

    let rows = n_list
        .par_iter()
        .map(|&n| -> Result<ConvergenceRow> {
            let problem = base.with_terminal(TerminalWeight::Resolvent { n })?;
            let sol = problem.solve_open_loop(y0)?;
            let mut dg = sol.g_hat.clone();
            dg.axpy(-1.0, &reference.g_hat);
            let state_error = sol
                .y_hat
                .states
                .iter()
                .zip(&reference.y_hat.states)
                .map(|(a, b)| {
                    let mut d = a.clone();
                    d.axpy(-1.0, b);
                    ip.norm_y(&d)
                })
                .fold(0.0, f64::max);
            let mut riccati_errors = Vec::with_capacity(riccati_steps.len());
            for (s, &k) in riccati_steps.iter().enumerate() {
                let mut errs = Vec::with_capacity(probes.len());
                for (z, pz) in probes.iter().zip(&reference_p[s]) {
                    let mut d = problem.riccati_apply(k, z)?;
                    d.axpy(-1.0, pz);
                    errs.push(ip.norm_y(&d));
                }
                riccati_errors.push(errs);
            }
            Ok(ConvergenceRow {
                n,
                control_error: ip.norm_u_traj(&dg, grid)?,
                state_error,
                cost_error: (sol.cost - reference.cost).abs(),
                riccati_errors,
                cg_iters: sol.cg_report.iters,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ConvergenceTable {
        rows,
        riccati_steps: riccati_steps.to_vec(),
        control_norm: ip.norm_u_traj(&reference.g_hat, grid)?,
        state_norm: reference.y_hat.states.iter().map(|y| ip.norm_y(y)).fold(0.0, f64::max),
        cost: reference.cost,
        probe_norms: probes.iter().map(|z| ip.norm_y(z)).collect(),
    })
}
