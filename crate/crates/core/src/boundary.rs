//! Perimeter mesh of the unit square and the boundary operators
//! `S^{±1} = (κ I − Δ_Γ)^{±1/2}` realized through the eigendecomposition of
//! the perimeter graph Laplacian.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_len, Error, Result};
use crate::space::{BoundarySlice, GridShape};

/// Which power of the shifted boundary operator to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FracPower {
    /// `(κ I − Δ_Γ)^{1/2}`
    Plus,
    /// `(κ I − Δ_Γ)^{-1/2}`
    Minus,
}

#[derive(Debug, Clone)]
pub struct BoundaryMesh {
    nodes: Vec<(usize, usize)>,
    arc_weights: Vec<f64>,
    segment_lengths: Vec<f64>,
    normals: Vec<[f64; 2]>,
    kappa: f64,
    eigenvalues: Vec<f64>,
    /// Columns are eigenvectors, orthonormal in the arc-length pairing.
    eigenvectors: DMatrix<f64>,
    s_plus: DMatrix<f64>,
    s_minus: DMatrix<f64>,
    /// `W S`, the Gram matrix of the `U` product.
    u_gram: DMatrix<f64>,
}

impl BoundaryMesh {
    pub fn new(shape: GridShape, kappa: f64) -> Result<Self> {
        shape.validate()?;
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidParameter(format!("boundary shift κ must be positive, got {kappa}")));
        }
        let nodes = shape.perimeter_nodes();
        let n = nodes.len();
        let (dx, dy) = (shape.dx(), shape.dy());

        let mut segment_lengths = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        for k in 0..n {
            let (a, b) = (nodes[k], nodes[(k + 1) % n]);
            let (len, normal) = match (b.0 as i64 - a.0 as i64, b.1 as i64 - a.1 as i64) {
                (1, 0) => (dx, [0.0, -1.0]),
                (0, 1) => (dy, [1.0, 0.0]),
                (-1, 0) => (dx, [0.0, 1.0]),
                (0, -1) => (dy, [-1.0, 0.0]),
                _ => unreachable!("perimeter nodes are neighbours"),
            };
            segment_lengths.push(len);
            normals.push(normal);
        }
        let arc_weights: Vec<f64> =
            (0..n).map(|k| 0.5 * (segment_lengths[(k + n - 1) % n] + segment_lengths[k])).collect();

        // stiffness of the periodic second difference, K_ij = Σ_seg (δ/ℓ)
        let mut stiffness = DMatrix::<f64>::zeros(n, n);
        for (k, &len) in segment_lengths.iter().enumerate() {
            let (a, b) = (k, (k + 1) % n);
            stiffness[(a, a)] += 1.0 / len;
            stiffness[(b, b)] += 1.0 / len;
            stiffness[(a, b)] -= 1.0 / len;
            stiffness[(b, a)] -= 1.0 / len;
        }
        let inv_sqrt_w: Vec<f64> = arc_weights.iter().map(|w| 1.0 / w.sqrt()).collect();
        let scaled = DMatrix::from_fn(n, n, |i, j| inv_sqrt_w[i] * stiffness[(i, j)] * inv_sqrt_w[j]);
        let eig = SymmetricEigen::new(scaled);

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let lambda_max = eig.eigenvalues.max();
        let mut eigenvalues = Vec::with_capacity(n);
        let mut eigenvectors = DMatrix::<f64>::zeros(n, n);
        for (col, &m) in order.iter().enumerate() {
            let mut lam = eig.eigenvalues[m];
            if lam.abs() <= 1e-10 * lambda_max {
                lam = 0.0;
            }
            eigenvalues.push(lam);
            let mut v: Vec<f64> = (0..n).map(|i| eig.eigenvectors[(i, m)] * inv_sqrt_w[i]).collect();
            // fix the sign so that the largest entry is positive
            let pivot = v.iter().copied().fold(0.0_f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            eigenvectors.set_column(col, &DVector::from_vec(v));
        }

        let spectral = |power: f64| -> DMatrix<f64> {
            let d = DMatrix::from_diagonal(&DVector::from_iterator(
                n,
                eigenvalues.iter().map(|l| (kappa + l).powf(power)),
            ));
            let w = DMatrix::from_diagonal(&DVector::from_column_slice(&arc_weights));
            &eigenvectors * d * eigenvectors.transpose() * w
        };
        let s_plus = spectral(0.5);
        let s_minus = spectral(-0.5);
        let w = DMatrix::from_diagonal(&DVector::from_column_slice(&arc_weights));
        let gram = &w * &s_plus;
        let u_gram = (&gram + gram.transpose()) * 0.5;

        Ok(Self { nodes, arc_weights, segment_lengths, normals, kappa, eigenvalues, eigenvectors, s_plus, s_minus, u_gram })
    }

    /// Number of perimeter nodes `N_Γ`.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Grid coordinates `(i, j)` of the perimeter nodes.
    pub fn nodes(&self) -> &[(usize, usize)] {
        &self.nodes
    }

    /// Arc-length quadrature weight of each node.
    pub fn arc_weights(&self) -> &[f64] {
        &self.arc_weights
    }

    /// Length of the segment from node `k` to node `k + 1`.
    pub fn segment_lengths(&self) -> &[f64] {
        &self.segment_lengths
    }

    /// Outward unit normal of the segment from node `k` to node `k + 1`.
    pub fn normals(&self) -> &[[f64; 2]] {
        &self.normals
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Eigenvalues of `−Δ_Γ` in ascending order; the first one is zero.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Eigenvector `φ_m`, normalized in the arc-length pairing.
    pub fn eigenvector(&self, m: usize) -> BoundarySlice {
        BoundarySlice::new(self.eigenvectors.column(m).iter().copied().collect())
    }

    /// Arc-length weighted `L²(Γ)` pairing.
    pub fn inner_arc(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter().zip(g).zip(&self.arc_weights).map(|((a, b), w)| w * a * b).sum()
    }

    /// `(S f, g)_Γ`.
    pub fn inner_u(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        check_len("boundary slice", f.len(), self.len())?;
        check_len("boundary slice", g.len(), self.len())?;
        let n = self.len();
        let mut acc = 0.0;
        for j in 0..n {
            let gj = g[j];
            if gj == 0.0 {
                continue;
            }
            let col = self.u_gram.column(j);
            let mut s = 0.0;
            for i in 0..n {
                s += col[i] * f[i];
            }
            acc += s * gj;
        }
        Ok(acc)
    }

    /// `Σ_m (κ + λ_m)^{±1/2} (f, φ_m) φ_m`.
    pub fn frac_laplacian(&self, power: FracPower, f: &BoundarySlice) -> Result<BoundarySlice> {
        check_len("boundary slice", f.len(), self.len())?;
        Ok(BoundarySlice::new(self.apply_power(power, &f.values)))
    }

    pub(crate) fn apply_power(&self, power: FracPower, f: &[f64]) -> Vec<f64> {
        let m = match power {
            FracPower::Plus => &self.s_plus,
            FracPower::Minus => &self.s_minus,
        };
        let n = self.len();
        let mut out = vec![0.0; n];
        for (j, &fj) in f.iter().enumerate() {
            if fj == 0.0 {
                continue;
            }
            let col = m.column(j);
            for i in 0..n {
                out[i] += col[i] * fj;
            }
        }
        out
    }

    /// Gram matrix of the `U` product in nodal coordinates.
    pub fn u_gram(&self) -> &DMatrix<f64> {
        &self.u_gram
    }
}
