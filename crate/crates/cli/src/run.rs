//! One pipeline per subcommand.

use std::sync::Arc;

use mxlqr::approx::convergence_study;
use mxlqr::approx::dense::{closed_loop_control, dense_discrete_riccati, dense_dre_oracle, dense_openloop_oracle, DenseSystem};
use mxlqr::sampling::{boundary_silent_state, gaussian_state, random_trajectory, smooth_random_state};
use mxlqr::{
    assemble_system, CgConfig, ControlTrajectory, GridShape, LqProblem, MaterialField, Propagator, QHandle, Quadrature,
    Result, StateVector, TerminalWeight, TimeGrid, Vector,
};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::{ExperimentConfig, Preset, QuadratureKind, TerminalKind};
use crate::report::{csv_table, num, Recorder};
use crate::Subcommand;

/// Independent streams derived from the run seed.
#[derive(Clone, Copy)]
enum Stream {
    InitialState = 1,
    Perturbation = 2,
    Splits = 3,
    Probes = 4,
    Lanczos = 5,
    Admissibility = 6,
}

fn rng(cfg: &ExperimentConfig, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stream as u64))
}

fn sub_seed(cfg: &ExperimentConfig, stream: Stream) -> u64 {
    rng(cfg, stream).random()
}

fn materials(cfg: &ExperimentConfig, shape: GridShape) -> MaterialField {
    let m = &cfg.materials;
    if m.eps_bump_amplitude == 0.0 {
        return MaterialField::uniform(shape, m.eps, m.mu, m.sigma);
    }
    let bump = |x: f64, y: f64| {
        let r2 = (x - m.eps_bump_center[0]).powi(2) + (y - m.eps_bump_center[1]).powi(2);
        m.eps + m.eps_bump_amplitude * (-r2 / (m.eps_bump_width * m.eps_bump_width)).exp()
    };
    MaterialField::from_fns(shape, bump, |_, _| m.mu, |_, _| m.sigma)
}

fn propagator(cfg: &ExperimentConfig, nx: usize, ny: usize) -> Result<Arc<Propagator>> {
    let shape = GridShape::new(nx, ny);
    let ops = assemble_system(shape, materials(cfg, shape), 1.0)?;
    Ok(Arc::new(Propagator::new(Arc::new(ops), TimeGrid::new(cfg.time.t_final, cfg.time.nt)?)?))
}

fn cg_config(cfg: &ExperimentConfig) -> CgConfig {
    CgConfig { tol: cfg.solver.cg_tol, max_iter: (cfg.solver.cg_max_iter > 0).then_some(cfg.solver.cg_max_iter) }
}

fn problem(cfg: &ExperimentConfig, prop: &Arc<Propagator>) -> Result<LqProblem> {
    let terminal = match cfg.problem.terminal_weight {
        TerminalKind::Identity => TerminalWeight::Identity,
        TerminalKind::Resolvent => TerminalWeight::Resolvent { n: cfg.problem.terminal_n },
    };
    LqProblem::new(Arc::clone(prop), cfg.problem.s_index, cfg.problem.alpha, terminal, cg_config(cfg))
}

fn initial_state(cfg: &ExperimentConfig, shape: GridShape) -> StateVector {
    let s = &cfg.initial_state;
    match s.preset {
        Preset::Gaussian => gaussian_state(shape, s.center, s.width, s.amplitude),
        Preset::BoundarySilent => {
            let mut y = boundary_silent_state(shape, s.radius);
            y.scale(s.amplitude);
            y
        }
        Preset::Random => {
            let mut y = smooth_random_state(shape, &mut rng(cfg, Stream::InitialState));
            y.scale(s.amplitude);
            y
        }
        Preset::Zero => StateVector::zeros(shape),
    }
}

fn gaussian_probes(cfg: &ExperimentConfig, shape: GridShape, count: usize) -> Vec<StateVector> {
    let mut r = rng(cfg, Stream::Probes);
    (0..count)
        .map(|_| gaussian_state(shape, [r.random_range(0.3..0.7), r.random_range(0.3..0.7)], 0.2, 1.0))
        .collect()
}

fn relative(err: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

fn diff_u(prop: &Propagator, a: &ControlTrajectory, b: &ControlTrajectory) -> Result<f64> {
    let mut d = a.clone();
    d.axpy(-1.0, b);
    prop.ops().ip().norm_u_traj(&d, prop.grid())
}

pub fn run(sub: Subcommand, cfg: &ExperimentConfig, rec: &mut Recorder<'_>) -> Result<()> {
    match sub {
        Subcommand::Solve => solve(cfg, rec),
        Subcommand::Feedback => feedback(cfg, rec),
        Subcommand::Transition => transition(cfg, rec),
        Subcommand::Approx => approx(cfg, rec),
        Subcommand::ZeroSigma => zero_sigma(cfg, rec),
        Subcommand::Admissibility => admissibility(cfg, rec),
        Subcommand::OracleCompare => oracle_compare(cfg, rec),
    }
}

struct Setup {
    prop: Arc<Propagator>,
    problem: LqProblem,
    y0: StateVector,
}

fn setup(cfg: &ExperimentConfig, rec: &mut Recorder<'_>) -> Result<Setup> {
    rec.time("assemble", || {
        let prop = propagator(cfg, cfg.grid.nx, cfg.grid.ny)?;
        let problem = problem(cfg, &prop)?;
        let y0 = initial_state(cfg, prop.ops().shape());
        Ok(Setup { prop, problem, y0 })
    })
}

fn solve(cfg: &ExperimentConfig, rec: &mut Recorder<'_>) -> Result<()> {
    let Setup { prop, problem, y0 } = setup(cfg, rec)?;
    let ip = prop.ops().ip();
    let sol = rec.time("open_loop", || problem.solve_open_loop(&y0))?;
    rec.at_most("cg_converged", sol.cg_report.final_relative_residual, cfg.solver.cg_tol);

    let worst_decrease = rec.time("optimality", || -> Result<f64> {
        let mut r = rng(cfg, Stream::Perturbation);
        let k_s = problem.k_s();
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..cfg.study.perturbations {
            let dg = random_trajectory(k_s, prop.nt() - k_s, prop.ops().n_gamma(), &mut r);
            for eps in [1e-3, -1e-3] {
                let mut g = sol.g_hat.clone();
                g.axpy(eps, &dg);
                worst = worst.max(sol.cost - problem.evaluate_cost(&g, &y0)?);
            }
        }
        Ok(worst)
    })?;
    rec.at_most("optimality", worst_decrease, cfg.checks.optimality);

    let p_form = rec.time("riccati", || -> Result<f64> {
        ip.inner_y(&problem.riccati_apply(problem.k_s(), &y0)?, &y0)
    })?;
    rec.at_most("cost_identity", relative((p_form - sol.cost).abs(), sol.cost), cfg.checks.cost_identity);

    let grid = prop.grid();
    let boundary = prop.ops().boundary();
    let control_norms: Vec<f64> = (problem.k_s()..prop.nt())
        .map(|k| boundary.inner_u(sol.g_hat.slice(k), sol.g_hat.slice(k)).map(|v| v.max(0.0).sqrt()))
        .collect::<Result<_>>()?;
    let state_norms: Vec<f64> = (problem.k_s()..=prop.nt()).map(|k| ip.norm_y(sol.y_hat.at(k))).collect();
    rec.result("cost", sol.cost);
    rec.result("riccati_form", p_form);
    rec.result("cg_iterations", sol.cg_report.iters);
    rec.result("initial_state_norm", ip.norm_y(&y0));
    rec.result("final_state_norm", *state_norms.last().unwrap());
    rec.result("control_norm", ip.norm_u_traj(&sol.g_hat, grid)?);
    rec.table(
        "state_norm.csv",
        csv_table(
            &["k", "t", "state_norm"],
            state_norms.iter().enumerate().map(|(i, v)| {
                let k = problem.k_s() + i;
                vec![k.to_string(), num(grid.node(k)), num(*v)]
            }),
        ),
    );
    rec.table(
        "control_norm.csv",
        csv_table(
            &["k", "t_mid", "control_norm"],
            control_norms.iter().enumerate().map(|(i, v)| {
                let k = problem.k_s() + i;
                vec![k.to_string(), num(grid.midpoint(k)), num(*v)]
            }),
        ),
    );
    Ok(())
}

fn feedback(cfg: &ExperimentConfig, rec: &mut Recorder<'_>) -> Result<()> {
    let Setup { prop, problem, y0 } = setup(cfg, rec)?;
    let rep = rec.time("feedback", || problem.feedback_residual(&y0, &cfg.study.sample_steps))?;
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    rec.at_most("feedback_cheap", max(&rep.cheap), cfg.checks.feedback_cheap);
    rec.at_most("feedback_independent", max(&rep.independent), cfg.checks.feedback_independent);
    let grid = prop.grid();
    rec.table(
        "feedback_residual.csv",
        csv_table(
            &["step", "t_mid", "cheap", "independent"],
            (0..rep.steps.len()).map(|i| {
                let k = rep.steps[i];
                vec![k.to_string(), num(grid.midpoint(k)), num(rep.cheap[i]), num(rep.independent[i])]
            }),
        ),
    );
    rec.result("feedback", &rep);
    Ok(())
}

fn transition(cfg: &ExperimentConfig, rec: &mut Recorder<'_>) -> Result<()> {
    let Setup { prop, problem, y0 } = setup(cfg, rec)?;
    let nt = prop.nt();
    let k0 = problem.k_s();
    let mut r = rng(cfg, Stream::Splits);
    let mut rows = Vec::new();
    rec.time("transition", || -> Result<()> {
        for _ in 0..cfg.study.transition_splits {
            let k_s = r.random_range(k0..nt - 2);
            let k_tau = r.random_range(k_s + 1..nt - 1);
            let k_t = r.random_range(k_tau + 1..=nt);
            let rep = problem.starting_at(k_s)?.transition_check(&y0, k_tau, k_t)?;
            rows.push((k_s, k_tau, k_t, rep));
        }
        Ok(())
    })?;
    let state = rows.iter().map(|r| r.3.state_error).fold(0.0, f64::max);
    let control = rows.iter().map(|r| r.3.control_error).fold(0.0, f64::max);
    rec.at_most("transition_state", state, cfg.checks.transition);
    rec.at_most("transition_control", control, cfg.checks.transition);
    rec.table(
        "transition.csv",
        csv_table(
            &["s", "tau", "t", "state_error", "control_error"],
            rows.iter().map(|(s, tau, t, rep)| {
                vec![s.to_string(), tau.to_string(), t.to_string(), num(rep.state_error), num(rep.control_error)]
            }),
        ),
    );
    rec.result(
        "splits",
        rows.iter()
            .map(|(s, tau, t, rep)| json!({"s": s, "tau": tau, "t": t, "state_error": rep.state_error, "control_error": rep.control_error}))
            .collect::<Vec<_>>(),
    );
    Ok(())
}

fn approx(cfg: &ExperimentConfig, rec: &mut Recorder<'_>) -> Result<()> {
    let Setup { prop, problem, y0 } = setup(cfg, rec)?;
    let nt = prop.nt();
    let mut steps: Vec<usize> =
        cfg.study.riccati_times.iter().map(|f| ((f * nt as f64).round() as usize).clamp(problem.k_s(), nt)).collect();
    steps.sort_unstable();
    steps.dedup();
    let probes = gaussian_probes(cfg, prop.ops().shape(), cfg.study.probes);
    let table = rec.time("convergence_study", || convergence_study(&problem, &y0, &cfg.study.n_list, &probes, &steps))?;
    let rows = &table.rows;
    let mut violations = 0usize;
    for i in 2..rows.len() {
        let (a, b) = (&rows[i - 1], &rows[i]);
        violations += usize::from(b.control_error > a.control_error);
        violations += usize::from(b.state_error > a.state_error);
        violations += usize::from(b.cost_error > a.cost_error);
        for (ea, eb) in a.riccati_errors.iter().flatten().zip(b.riccati_errors.iter().flatten()) {
            violations += usize::from(eb > ea);
        }
    }
    rec.at_most("approx_monotone", violations as f64, 0.0);
    let last = rows.len() - 1;
    rec.at_most("approx_final_control", relative(rows[last].control_error, table.control_norm), cfg.checks.approx_final);
    let p_err = (0..steps.len()).map(|s| table.relative_riccati_error(last, s)).fold(0.0, f64::max);
    rec.at_most("approx_final_riccati", p_err, cfg.checks.approx_final);
    rec.table("convergence.csv", table.to_csv());
    rec.result("riccati_steps", &table.riccati_steps);
    rec.result("reference_cost", table.cost);
    rec.result("reference_control_norm", table.control_norm);
    rec.result(
        "rows",
        rows.iter()
            .enumerate()
            .map(|(i, r)| {
                json!({
                    "n": r.n,
                    "relative_control_error": relative(r.control_error, table.control_norm),
                    "relative_state_error": relative(r.state_error, table.state_norm),
                    "relative_cost_error": relative(r.cost_error, table.cost),
                    "relative_riccati_error": (0..steps.len()).map(|s| table.relative_riccati_error(i, s)).collect::<Vec<_>>(),
                    "cg_iterations": r.cg_iters,
                })
            })
            .collect::<Vec<_>>(),
    );
    Ok(())
}

fn zero_sigma(cfg: &ExperimentConfig, rec: &mut Recorder<'_>) -> Result<()> {
    let Setup { prop, problem, y0 } = setup(cfg, rec)?;
    let quadrature = match cfg.study.quadrature {
        QuadratureKind::Trapezoid => Quadrature::Trapezoid,
        QuadratureKind::Midpoint => Quadrature::Midpoint,
    };
    let q = QHandle::new(Arc::clone(&prop), cfg.problem.alpha, cg_config(cfg))?.with_quadrature(quadrature);
    let k_s = problem.k_s();
    let nt = prop.nt();
    let ip = prop.ops().ip();

    let lq = rec.time("open_loop", || problem.solve_open_loop(&y0))?;
    let via_q = rec.time("open_loop_via_q", || q.openloop_via_q(&y0))?;
    let g_norm = ip.norm_u_traj(&lq.g_hat, prop.grid())?;
    rec.at_most("zero_sigma_control", relative(diff_u(&prop, &via_q.g_hat, &lq.g_hat)?, g_norm), cfg.checks.zero_sigma_control);

    let shape = prop.ops().shape();
    let mut probes = gaussian_probes(cfg, shape, cfg.study.probes.max(1));
    probes.push(boundary_silent_state(shape, cfg.initial_state.radius));
    let pq = rec.time("pq_identity", || q.pq_identity_check(&problem, k_s, &probes))?;
    rec.at_most("pq_identity", pq, cfg.checks.pq_identity);
    let pq_t = q.pq_identity_check(&problem, nt, &probes)?;
    rec.at_most("pq_terminal", pq_t, 1e-14);

    let seed = sub_seed(cfg, Stream::Lanczos);
    let (rp, rq) = rec.time("spectrum", || -> Result<_> {
        Ok((problem.coercivity_estimate(k_s, cfg.study.lanczos_iter, seed)?, q.spectrum_estimate(k_s, cfg.study.lanczos_iter, seed)?))
    })?;
    rec.at_least("coercivity", rp.min, cfg.checks.coercivity);
    rec.at_most("coercivity_cross", (rp.min * rq.max - 1.0).abs(), cfg.checks.pq_identity);

    let stride = ((nt - k_s) / 8).max(1);
    let interior: Vec<usize> = (k_s + 1..nt).step_by(stride).collect();
    let (x, y) = (&probes[0], probes.get(1).unwrap_or(&probes[0]));
    let residuals = rec.time("dual_riccati", || {
        interior.iter().map(|&k| q.dual_re_residual(k, x, y)).collect::<Result<Vec<f64>>>()
    })?;
    rec.table(
        "dual_riccati_residual.csv",
        csv_table(
            &["k", "t", "residual"],
            interior.iter().zip(&residuals).map(|(k, r)| vec![k.to_string(), num(prop.grid().node(*k)), num(*r)]),
        ),
    );
    rec.result("quadrature", cfg.study.quadrature);
    rec.result("lq_cost", lq.cost);
    rec.result("p_spectrum", rp);
    rec.result("q_spectrum", rq);
    rec.result("q_inverse_cg_iterations", via_q.cg_report.iters);
    Ok(())
}

fn admissibility(cfg: &ExperimentConfig, rec: &mut Recorder<'_>) -> Result<()> {
    let seed = sub_seed(cfg, Stream::Admissibility);
    let mut ratios = Vec::new();
    for &n in &cfg.study.admissibility_grids {
        let rep = rec.time(&format!("grid_{n}"), || {
            propagator(cfg, n, n)?.admissibility_ratio(cfg.study.admissibility_samples, seed, cfg.study.power_steps)
        })?;
        ratios.push((n, rep));
    }
    let non_finite = ratios.iter().filter(|(_, r)| !r.max_ratio.is_finite()).count();
    rec.at_most("admissibility_finite", non_finite as f64, 0.0);
    let max = ratios.iter().map(|(_, r)| r.max_ratio).fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().map(|(_, r)| r.max_ratio).fold(f64::INFINITY, f64::min);
    rec.at_most("admissibility_spread", max / min, cfg.checks.admissibility_spread);
    rec.table(
        "admissibility.csv",
        csv_table(&["n", "max_ratio"], ratios.iter().map(|(n, r)| vec![n.to_string(), num(r.max_ratio)])),
    );
    rec.result(
        "grids",
        ratios.iter().map(|(n, r)| json!({"n": n, "max_ratio": r.max_ratio, "ratios": r.ratios})).collect::<Vec<_>>(),
    );
    Ok(())
}

fn oracle_compare(cfg: &ExperimentConfig, rec: &mut Recorder<'_>) -> Result<()> {
    let Setup { prop, problem, y0 } = setup(cfg, rec)?;
    let k_s = problem.k_s();
    let nt = prop.nt();
    let dt = prop.grid().dt();
    let ip = prop.ops().ip();

    let sys = rec.time("dense_assembly", || DenseSystem::from_ops(prop.ops()))?;
    let free = prop.free_evolution(&y0, k_s, nt)?;
    let dense_free = sys.cayley_power(dt, nt - k_s, &DVector::from_column_slice(y0.as_slice()));
    let free_err = (DVector::from_column_slice(free.as_slice()) - &dense_free).norm();
    rec.at_most("oracle_state", relative(free_err, dense_free.norm()), cfg.checks.oracle_state);

    let sol = rec.time("open_loop", || problem.solve_open_loop(&y0))?;
    let dense_g = rec.time("dense_open_loop", || dense_openloop_oracle(&problem, &y0))?;
    let g_norm = ip.norm_u_traj(&sol.g_hat, prop.grid())?;
    rec.at_most("oracle_control", relative(diff_u(&prop, &dense_g, &sol.g_hat)?, g_norm), cfg.checks.oracle_control);

    let (_, ric) = rec.time("dense_discrete_riccati", || dense_discrete_riccati(&problem))?;
    let mut worst: f64 = 0.0;
    let mut riccati_rows = Vec::new();
    for k in [k_s, (k_s + nt) / 2] {
        let form = ip.inner_y(&problem.riccati_apply(k, &y0)?, &y0)?;
        let dense = ric.quadratic_form(&sys, k, &y0);
        let err = relative((form - dense).abs(), dense.abs());
        worst = worst.max(err);
        riccati_rows.push(json!({"k": k, "matrix_free": form, "dense": dense, "relative_error": err}));
    }
    rec.at_most("oracle_riccati", worst, cfg.checks.oracle_riccati);

    let dim = y0.len();
    let iters = cfg.study.lanczos_iter.max(60).min(dim);
    let ritz = rec.time("lanczos", || problem.coercivity_estimate(k_s, iters, sub_seed(cfg, Stream::Lanczos)))?;
    let eig: DVector<f64> = ric.at(k_s).clone().symmetric_eigenvalues();
    let spectrum_err = ((ritz.min - eig.min()).abs() / eig.min().abs()).max((ritz.max - eig.max()).abs() / eig.max().abs());
    rec.at_most("oracle_spectrum", spectrum_err, cfg.checks.oracle_spectrum);

    let (dre_sys, dre) = rec.time("dense_dre", || dense_dre_oracle(&problem))?;
    let dre_form = dre.quadratic_form(&dre_sys, k_s, &y0);
    let closed = closed_loop_control(&dre_sys, &dre, &problem, &y0)?;
    let rows: Vec<Vec<String>> = rec
        .checks
        .iter()
        .filter(|c| c.name.starts_with("oracle_"))
        .map(|c| vec![c.name.trim_start_matches("oracle_").to_string(), num(c.value)])
        .collect();
    rec.table("oracle_errors.csv", csv_table(&["quantity", "relative_error"], rows));
    rec.result("riccati", riccati_rows);
    rec.result("lanczos", json!({"ritz": ritz, "dense_min": eig.min(), "dense_max": eig.max()}));
    rec.result(
        "continuous_dre",
        json!({
            "cost_gap": relative((dre_form - sol.cost).abs(), sol.cost),
            "closed_loop_control_gap": relative(diff_u(&prop, &closed, &sol.g_hat)?, g_norm),
        }),
    );
    rec.result("state_dimension", dim);
    Ok(())
}
