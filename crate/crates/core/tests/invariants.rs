use std::sync::Arc;

use mxlqr::approx::{gn_adjoint_apply, gn_apply};
use mxlqr::sampling::{gaussian_state, random_slice, random_state, random_trajectory, smooth_random_state};
use mxlqr::{
    assemble_system, CgConfig, ControlTrajectory, Direction, GridShape, LqProblem, MaterialField, MaxwellOperators,
    Propagator, Record, StateVector, TerminalWeight, TimeGrid, Vector,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ops(n: usize, sigma: f64) -> Arc<MaxwellOperators> {
    let shape = GridShape::new(n, n);
    Arc::new(assemble_system(shape, MaterialField::uniform(shape, 1.0, 1.0, sigma), 1.0).unwrap())
}

fn problem(n: usize, nt: usize, sigma: f64) -> LqProblem {
    let prop = Propagator::new(ops(n, sigma), TimeGrid::new(1.0, nt).unwrap()).unwrap();
    LqProblem::new(Arc::new(prop), 0, 1.0, TerminalWeight::Identity, CgConfig::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn state_product_is_symmetric_bilinear(seed in any::<u64>(), a in -3.0f64..3.0) {
        let ops = ops(6, 0.0);
        let ip = ops.ip();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y, z) = (random_state(ops.shape(), &mut rng), random_state(ops.shape(), &mut rng), random_state(ops.shape(), &mut rng));
        let xy = ip.inner_y(&x, &y).unwrap();
        prop_assert!((xy - ip.inner_y(&y, &x).unwrap()).abs() <= 1e-13 * ip.norm_y(&x) * ip.norm_y(&y));
        let mut w = x.clone();
        w.axpy(a, &z);
        let lhs = ip.inner_y(&w, &y).unwrap();
        let rhs = xy + a * ip.inner_y(&z, &y).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (ip.norm_y(&w) + ip.norm_y(&x)) * ip.norm_y(&y));
        prop_assert!(xy.abs() <= ip.norm_y(&x) * ip.norm_y(&y));
    }

    #[test]
    fn control_product_is_symmetric_and_bounded_below(seed in any::<u64>()) {
        let ops = ops(6, 0.0);
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let ip = ops.ip();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g1 = random_trajectory(1, 3, ops.n_gamma(), &mut rng);
        let g2 = random_trajectory(1, 3, ops.n_gamma(), &mut rng);
        let a = ip.inner_u_traj(&g1, &g2, &grid).unwrap();
        let b = ip.inner_u_traj(&g2, &g1, &grid).unwrap();
        let (n1, n2) = (ip.norm_u_traj(&g1, &grid).unwrap(), ip.norm_u_traj(&g2, &grid).unwrap());
        prop_assert!((a - b).abs() <= 1e-13 * n1 * n2);
        prop_assert!(a.abs() <= n1 * n2 * (1.0 + 1e-14));
        let arc: f64 = (1..4).map(|k| ip.boundary().inner_arc(g1.slice(k), g1.slice(k))).sum::<f64>() * grid.dt();
        prop_assert!(n1 * n1 >= ops.boundary().kappa().sqrt() * arc * (1.0 - 1e-12));
    }

    #[test]
    fn control_operator_factors_through_green_map(seed in any::<u64>()) {
        let ops = ops(6, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_slice(ops.n_gamma(), &mut rng);
        let gy = ops.green_map(&g).unwrap();
        let mut d = gy.clone();
        d.axpy(-1.0, &ops.apply_a(Direction::Forward, &gy).unwrap());
        d.axpy(-1.0, &ops.apply_b(&g).unwrap());
        let g_norm = ops.ip().inner_u(&g.values, &g.values).unwrap().sqrt();
        prop_assert!(ops.ip().norm_y(&d) <= 1e-9 * g_norm);
    }
}

#[test]
fn b_star_approaches_trace_formula_under_refinement() {
    // trace cos(π s) along the perimeter; S^{-1} maps it to (κ + π²)^{-1/2} cos(π s)
    let mut errors = Vec::new();
    for n in [8, 16, 32] {
        let ops = ops(n, 0.0);
        let mut y = StateVector::zeros(ops.shape());
        let shape = ops.shape();
        let nodes = ops.boundary().nodes().to_vec();
        let mut s = 0.0;
        let mut expected = Vec::with_capacity(nodes.len());
        for (k, &(i, j)) in nodes.iter().enumerate() {
            let v = (std::f64::consts::PI * s).cos();
            y.ez_mut()[shape.ez_index(i, j)] = v;
            expected.push(v / (1.0 + std::f64::consts::PI.powi(2)).sqrt());
            s += ops.boundary().segment_lengths()[k];
        }
        let got = ops.apply_b_star(&y).unwrap().values;
        let err = got.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        errors.push(err);
    }
    assert!(errors[1] < errors[0] && errors[2] < errors[1], "{errors:?}");
}

#[test]
fn evolution_map_is_continuous_in_the_initial_time() {
    // ‖Φ(T, s + dt) y0 − Φ(T, s) y0‖ at s = T/2 must shrink as dt is refined
    let mut gaps = Vec::new();
    for nt in [32, 64, 128] {
        let p = problem(8, nt, 0.0);
        let y0 = gaussian_state(p.propagator().ops().shape(), [0.4, 0.6], 0.2, 1.0);
        let a = p.starting_at(nt / 2).unwrap().solve_open_loop(&y0).unwrap();
        let b = p.starting_at(nt / 2 + 1).unwrap().solve_open_loop(&y0).unwrap();
        let mut d = a.y_hat.last().clone();
        d.axpy(-1.0, b.y_hat.last());
        gaps.push(p.propagator().ops().ip().norm_y(&d));
    }
    assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1], "{gaps:?}");
}

#[test]
fn input_map_stability_constant_stays_bounded() {
    let mut constants = Vec::new();
    for (n, nt) in [(8, 32), (16, 64)] {
        let prop = Propagator::new(ops(n, 0.0), TimeGrid::new(1.0, nt).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = random_trajectory(0, nt, prop.ops().n_gamma(), &mut rng);
        let zero = StateVector::zeros(prop.ops().shape());
        let traj = prop.propagate(Direction::Forward, &zero, 0, nt, Some(&g), Record::Full).unwrap();
        let ip = prop.ops().ip();
        let sup = traj.states.iter().map(|y| ip.norm_y(y)).fold(0.0, f64::max);
        constants.push(sup / ip.norm_u_traj(&g, prop.grid()).unwrap());
    }
    assert!(constants.iter().all(|c| c.is_finite() && *c > 0.0));
    assert!(constants[1] < 10.0 * constants[0], "{constants:?}");
}

#[test]
fn optimal_pair_is_bounded_by_initial_state() {
    let p = problem(8, 32, 0.5);
    let ip = p.propagator().ops().ip();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..3 {
        let y0 = smooth_random_state(p.propagator().ops().shape(), &mut rng);
        let sol = p.solve_open_loop(&y0).unwrap();
        let y_norm = ip.norm_y(&y0);
        assert!(sol.y_hat.states.iter().all(|y| ip.norm_y(y) <= y_norm * (1.0 + 1e-9)));
        assert!(ip.norm_u_traj(&sol.g_hat, p.propagator().grid()).unwrap() <= y_norm);
    }
}

#[test]
fn optimality_gap_is_the_gram_form() {
    let p = problem(6, 16, 0.3);
    let ip = p.propagator().ops().ip();
    let grid = p.propagator().grid();
    let y0 = gaussian_state(p.propagator().ops().shape(), [0.5, 0.4], 0.2, 1.0);
    let sol = p.solve_open_loop(&y0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..5 {
        let g = random_trajectory(0, 16, p.propagator().ops().n_gamma(), &mut rng);
        let mut d = g.clone();
        d.axpy(-1.0, &sol.g_hat);
        let gap = p.evaluate_cost(&g, &y0).unwrap() - sol.cost;
        let form = ip.inner_u_traj(&p.gram_apply(&d).unwrap(), &d, grid).unwrap();
        assert!((gap - form).abs() <= 1e-9 * form);
    }
}

#[test]
fn scaling_the_functional_keeps_the_minimizer() {
    let p = problem(6, 16, 0.0);
    let n_state = p.propagator().ops().shape().state_len();
    let c: f64 = 3.5;
    let scaled = LqProblem::new(
        Arc::clone(p.propagator()),
        0,
        c * p.alpha(),
        TerminalWeight::Diagonal(vec![c.sqrt(); n_state]),
        CgConfig::with_tol(1e-12),
    )
    .unwrap();
    let base = LqProblem::new(Arc::clone(p.propagator()), 0, 1.0, TerminalWeight::Identity, CgConfig::with_tol(1e-12)).unwrap();
    let y0 = gaussian_state(p.propagator().ops().shape(), [0.4, 0.6], 0.2, 1.0);
    let (a, b) = (base.solve_open_loop(&y0).unwrap(), scaled.solve_open_loop(&y0).unwrap());
    let ip = p.propagator().ops().ip();
    let grid = p.propagator().grid();
    let mut d = b.g_hat.clone();
    d.axpy(-1.0, &a.g_hat);
    assert!(ip.norm_u_traj(&d, grid).unwrap() <= 1e-9 * ip.norm_u_traj(&a.g_hat, grid).unwrap());
    assert!((b.cost - c * a.cost).abs() <= 1e-9 * c * a.cost);
}

#[test]
fn riccati_operator_is_self_adjoint_and_nonnegative() {
    let p = problem(6, 16, 0.4);
    let ip = p.propagator().ops().ip();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for k in [0, 9] {
        let x = random_state(p.propagator().ops().shape(), &mut rng);
        let y = random_state(p.propagator().ops().shape(), &mut rng);
        let (px, py) = (p.riccati_apply(k, &x).unwrap(), p.riccati_apply(k, &y).unwrap());
        let scale = ip.norm_y(&x) * ip.norm_y(&y);
        assert!((ip.inner_y(&px, &y).unwrap() - ip.inner_y(&x, &py).unwrap()).abs() <= 1e-8 * scale);
        assert!(ip.inner_y(&px, &x).unwrap() >= 0.0);
    }
}

#[test]
fn smoothed_terminal_gram_tends_to_identity() {
    let ops = ops(8, 0.0);
    let z = gaussian_state(ops.shape(), [0.5, 0.5], 0.25, 1.0);
    let mut last = f64::INFINITY;
    for n in [1, 2, 4, 8, 16, 32, 64] {
        let mut d = gn_adjoint_apply(&ops, n, &gn_apply(&ops, n, &z).unwrap()).unwrap();
        d.axpy(-1.0, &z);
        let e = ops.ip().norm_y(&d);
        assert!(e < last);
        last = e;
    }
}

#[test]
fn smoothed_gram_operators_share_the_lower_bound() {
    let p = problem(6, 12, 0.0);
    let ip = p.propagator().ops().ip();
    let grid = p.propagator().grid();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let g: ControlTrajectory = random_trajectory(0, 12, p.propagator().ops().n_gamma(), &mut rng);
    let gg = ip.inner_u_traj(&g, &g, grid).unwrap();
    for n in [1, 4, 16, 64] {
        let pn = p.with_terminal(TerminalWeight::Resolvent { n }).unwrap();
        assert!(ip.inner_u_traj(&pn.gram_apply(&g).unwrap(), &g, grid).unwrap() >= gg * (1.0 - 1e-12));
    }
}
