//! Deterministic test states and controls.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::space::{BoundarySlice, ControlTrajectory, GridShape, StateVector};

/// All entries i.i.d. standard normal.
pub fn random_state<R: Rng + ?Sized>(shape: GridShape, rng: &mut R) -> StateVector {
    let data = (0..shape.state_len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    StateVector::from_vec(shape, data).expect("length matches")
}

pub fn random_slice<R: Rng + ?Sized>(n_gamma: usize, rng: &mut R) -> BoundarySlice {
    BoundarySlice::new((0..n_gamma).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
}

pub fn random_trajectory<R: Rng + ?Sized>(start: usize, n_slices: usize, n_gamma: usize, rng: &mut R) -> ControlTrajectory {
    let mut g = ControlTrajectory::zeros(start, n_slices, n_gamma);
    for k in start..start + n_slices {
        for v in g.slice_mut(k) {
            *v = rng.sample(StandardNormal);
        }
    }
    g
}

/// `E_z = amplitude · exp(−|x − center|² / width²)`, no magnetic field.
pub fn gaussian_state(shape: GridShape, center: [f64; 2], width: f64, amplitude: f64) -> StateVector {
    StateVector::from_ez_fn(shape, |x, y| {
        let r2 = (x - center[0]).powi(2) + (y - center[1]).powi(2);
        amplitude * (-r2 / (width * width)).exp()
    })
}

/// Smooth bump in `E_z` supported in the disc of `radius` around the
/// center of the square, so it vanishes on a neighbourhood of the boundary.
pub fn boundary_silent_state(shape: GridShape, radius: f64) -> StateVector {
    StateVector::from_ez_fn(shape, |x, y| {
        let r2 = ((x - 0.5).powi(2) + (y - 0.5).powi(2)) / (radius * radius);
        if r2 < 1.0 {
            (1.0 - r2).powi(3)
        } else {
            0.0
        }
    })
}

/// A random superposition of a few wide Gaussians in all three components.
pub fn smooth_random_state<R: Rng + ?Sized>(shape: GridShape, rng: &mut R) -> StateVector {
    let mut data = vec![0.0; shape.state_len()];
    let (dx, dy) = (shape.dx(), shape.dy());
    let positions: Vec<(usize, f64, f64)> = {
        let mut p = Vec::with_capacity(shape.state_len());
        for j in 0..=shape.ny {
            for i in 0..=shape.nx {
                p.push((shape.ez_index(i, j), i as f64 * dx, j as f64 * dy));
            }
        }
        for j in 0..shape.ny {
            for i in 0..=shape.nx {
                p.push((shape.hx_index(i, j), i as f64 * dx, (j as f64 + 0.5) * dy));
            }
        }
        for j in 0..=shape.ny {
            for i in 0..shape.nx {
                p.push((shape.hy_index(i, j), (i as f64 + 0.5) * dx, j as f64 * dy));
            }
        }
        p
    };
    let n_ez = shape.n_ez();
    let n_hx = shape.n_hx();
    for component in 0..3 {
        for _ in 0..3 {
            let cx: f64 = rng.random_range(0.2..0.8);
            let cy: f64 = rng.random_range(0.2..0.8);
            let w: f64 = rng.random_range(0.2..0.35);
            let a: f64 = rng.sample(StandardNormal);
            for &(k, x, y) in &positions {
                let comp = if k < n_ez {
                    0
                } else if k < n_ez + n_hx {
                    1
                } else {
                    2
                };
                if comp == component {
                    data[k] += a * (-((x - cx).powi(2) + (y - cy).powi(2)) / (w * w)).exp();
                }
            }
        }
    }
    StateVector::from_vec(shape, data).expect("length matches")
}
