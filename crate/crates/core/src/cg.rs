//! Conjugate gradients for self-adjoint positive operators in an arbitrary
//! inner product.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::Vector;

/// Stopping rule for [`cg_solve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgConfig {
    /// Relative residual target `‖op(x) − b‖ ≤ tol ‖b‖`.
    pub tol: f64,
    /// Iteration cap; `None` means `10 √dim + 200`.
    pub max_iter: Option<usize>,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: None }
    }
}

impl CgConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }

    pub fn max_iter_for(&self, dim: usize) -> usize {
        self.max_iter.unwrap_or_else(|| 10 * (dim as f64).sqrt().ceil() as usize + 200)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CgReport {
    pub iters: usize,
    pub final_relative_residual: f64,
}

/// Solves `op(x) = rhs` for `op` self-adjoint and positive definite in `ip`.
///
/// Convergence is confirmed on the true residual `rhs − op(x)`, so the
/// returned report never relies on the recursively updated residual alone.
/// Hitting `max_iter` or meeting non-positive curvature is an error.
pub fn cg_solve<V, F, P>(mut op: F, rhs: &V, ip: P, tol: f64, max_iter: usize) -> Result<(V, CgReport)>
where
    V: Vector,
    F: FnMut(&V) -> Result<V>,
    P: Fn(&V, &V) -> f64,
{
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("CG tolerance must be positive, got {tol}")));
    }
    let mut x = rhs.zeros_like();
    let b_norm = ip(rhs, rhs).max(0.0).sqrt();
    if b_norm == 0.0 {
        return Ok((x, CgReport::default()));
    }
    let target = tol * b_norm;

    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr = ip(&r, &r);
    let mut iters = 0;
    let mut last = 1.0;
    while iters < max_iter {
        iters += 1;
        let q = op(&p)?;
        let curvature = ip(&p, &q);
        if !(curvature > 0.0) {
            return Err(Error::Indefinite { iter: iters, curvature });
        }
        let a = rr / curvature;
        x.axpy(a, &p);
        r.axpy(-a, &q);
        let rr_new = ip(&r, &r);
        last = rr_new.max(0.0).sqrt() / b_norm;
        if rr_new.max(0.0).sqrt() <= target {
            // confirm on the true residual, restart from it otherwise
            let mut true_r = rhs.clone();
            true_r.axpy(-1.0, &op(&x)?);
            let true_norm = ip(&true_r, &true_r).max(0.0).sqrt();
            last = true_norm / b_norm;
            if true_norm <= target {
                return Ok((x, CgReport { iters, final_relative_residual: last }));
            }
            r = true_r;
            p = r.clone();
            rr = ip(&r, &r);
            continue;
        }
        let beta = rr_new / rr;
        rr = rr_new;
        let mut p_next = r.clone();
        p_next.axpy(beta, &p);
        p = p_next;
    }
    Err(Error::NotConverged { iters, residual: last })
}
