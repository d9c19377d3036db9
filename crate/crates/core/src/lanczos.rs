//! Symmetric Lanczos with full reorthogonalization for extreme eigenvalues of
//! matrix-free self-adjoint operators.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::space::Vector;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RitzBounds {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

/// Runs up to `n_iter` Lanczos steps of `op` in the inner product `ip`,
/// starting from `start`, and returns the extreme Ritz values.
pub fn lanczos_extremes<V, F, P>(mut op: F, start: &V, ip: P, n_iter: usize) -> Result<RitzBounds>
where
    V: Vector,
    F: FnMut(&V) -> Result<V>,
    P: Fn(&V, &V) -> f64,
{
    let norm0 = ip(start, start).max(0.0).sqrt();
    if norm0 == 0.0 || n_iter == 0 {
        return Err(Error::InvalidParameter("Lanczos needs a nonzero start vector and n_iter >= 1".into()));
    }
    let mut q = start.clone();
    q.scale(1.0 / norm0);
    let mut basis: Vec<V> = Vec::with_capacity(n_iter);
    let mut alphas = Vec::with_capacity(n_iter);
    let mut betas: Vec<f64> = Vec::with_capacity(n_iter);
    for _ in 0..n_iter {
        let mut w = op(&q)?;
        let a = ip(&q, &w);
        w.axpy(-a, &q);
        if let Some(prev) = basis.last() {
            w.axpy(-betas.last().copied().unwrap_or(0.0), prev);
        }
        basis.push(q.clone());
        // two passes of Gram–Schmidt against the whole basis
        for _ in 0..2 {
            for v in &basis {
                let c = ip(v, &w);
                w.axpy(-c, v);
            }
        }
        alphas.push(a);
        let b = ip(&w, &w).max(0.0).sqrt();
        if b <= 1e-12 * a.abs().max(1.0) {
            break;
        }
        betas.push(b);
        w.scale(1.0 / b);
        q = w;
    }
    let m = alphas.len();
    let t = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alphas[i]
        } else if i.abs_diff(j) == 1 {
            betas[i.min(j)]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t).eigenvalues;
    Ok(RitzBounds { min: eig.min(), max: eig.max(), steps: m })
}
