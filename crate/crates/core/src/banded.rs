//! Banded symmetric positive definite matrices and their Cholesky factors.

use crate::error::{Error, Result};

/// Lower band of a symmetric matrix, `bw` sub-diagonals.
#[derive(Debug, Clone)]
pub(crate) struct BandedSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    /// Adds `v` to entry `(i, j)` (and implicitly to `(j, i)`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry ({i}, {j}) outside band {}", self.bw);
        self.data[i * (self.bw + 1) + (i - j)] += v;
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.bw + 1) + (i - j)]
    }

    pub fn factor(&self) -> Result<BandedCholesky> {
        let (n, bw) = (self.n, self.bw);
        let mut l = vec![0.0; n * (bw + 1)];
        let at = |i: usize, j: usize| i * (bw + 1) + (i - j);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for k in lo..i {
                let mut s = self.get(i, k);
                for m in lo.max(k.saturating_sub(bw))..k {
                    s -= l[at(i, m)] * l[at(k, m)];
                }
                l[at(i, k)] = s / l[at(k, k)];
            }
            let mut d = self.get(i, i);
            for m in lo..i {
                d -= l[at(i, m)] * l[at(i, m)];
            }
            if !(d > 0.0) {
                return Err(Error::Factorization { row: i, pivot: d });
            }
            l[at(i, i)] = d.sqrt();
        }
        Ok(BandedCholesky { n, bw, l })
    }
}

/// `A = L Lᵀ` with `L` lower banded.
#[derive(Debug, Clone)]
pub(crate) struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.l[i * (self.bw + 1) + (i - j)]
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let mut s = b[i];
            for j in i.saturating_sub(self.bw)..i {
                s -= self.at(i, j) * b[j];
            }
            b[i] = s / self.at(i, i);
        }
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for j in i + 1..(i + self.bw + 1).min(self.n) {
                s -= self.at(j, i) * b[j];
            }
            b[i] = s / self.at(i, i);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_dense_cholesky() {
        let (n, bw) = (40, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut band = BandedSpd::zeros(n, bw);
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(bw)..i {
                let v = rng.random_range(-1.0..1.0);
                band.add(i, j, v);
                dense[(i, j)] += v;
                dense[(j, i)] += v;
            }
            let d = 2.0 * bw as f64 + rng.random_range(0.0..1.0);
            band.add(i, i, d);
            dense[(i, i)] += d;
        }
        let chol = band.factor().unwrap();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut x = b.clone();
        chol.solve_in_place(&mut x);
        let exact = dense.lu().solve(&DVector::from_column_slice(&b)).unwrap();
        let err = (DVector::from_column_slice(&x) - &exact).norm() / exact.norm();
        assert!(err < 1e-13, "{err}");
    }

    #[test]
    fn indefinite_matrix_fails() {
        let mut band = BandedSpd::zeros(3, 1);
        band.add(0, 0, 1.0);
        band.add(1, 0, 2.0);
        band.add(1, 1, 1.0);
        band.add(2, 2, 1.0);
        assert!(matches!(band.factor(), Err(Error::Factorization { row: 1, .. })));
    }
}
