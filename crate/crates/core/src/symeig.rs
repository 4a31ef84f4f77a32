//! Dense symmetric eigendecomposition and the gradient of the largest eigenvalue.
//!
//! Every refinement step linearises `lambda1` around the current iterate. For a
//! symmetric `M` with a simple top eigenvalue the gradient is `u1 u1^T`, where
//! `u1` is the unit top eigenvector; the result is independent of the sign of
//! `u1`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest dimension handled by the dense routines.
pub const MAX_DIM: usize = 64;

/// Symmetric matrix stored as its packed lower triangle (row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricMatrix {
    dim: usize,
    packed: Vec<f64>,
}

#[inline]
fn packed_index(i: usize, j: usize) -> usize {
    let (r, c) = if i >= j { (i, j) } else { (j, i) };
    r * (r + 1) / 2 + c
}

impl SymmetricMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            packed: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    /// Builds from a dense matrix, reading the lower triangle only.
    pub fn from_lower(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "matrix must be square");
        let dim = m.nrows();
        let mut out = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..=i {
                out.set(i, j, m[(i, j)]);
            }
        }
        out
    }

    /// Builds from a dense matrix by averaging it with its transpose.
    pub fn symmetrized(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "matrix must be square");
        let dim = m.nrows();
        let mut out = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..=i {
                out.set(i, j, 0.5 * (m[(i, j)] + m[(j, i)]));
            }
        }
        out
    }

    /// `v v^T`.
    pub fn outer(v: &[f64]) -> Self {
        let mut out = Self::zeros(v.len());
        for i in 0..v.len() {
            for j in 0..=i {
                out.set(i, j, v[i] * v[j]);
            }
        }
        out
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.packed[packed_index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.packed[packed_index(i, j)] = value;
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.packed.iter().all(|x| x.is_finite())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &SymmetricMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..=i {
                let w = if i == j { 1.0 } else { 2.0 };
                acc += w * self.get(i, j) * other.get(i, j);
            }
        }
        acc
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            packed: self.packed.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &SymmetricMatrix) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            packed: self
                .packed
                .iter()
                .zip(&other.packed)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

/// Eigenvalues in descending order with matching orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenPair {
    pub fn lambda1(&self) -> f64 {
        self.values[0]
    }

    pub fn top_vector(&self) -> DVector<f64> {
        self.vectors.column(0).into_owned()
    }

    /// `V diag(lambda) V^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&DVector::from_vec(self.values.clone()));
        &self.vectors * d * self.vectors.transpose()
    }
}

pub fn sym_eig(m: &SymmetricMatrix) -> Result<EigenPair> {
    if !m.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    if m.dim() == 0 || m.dim() > MAX_DIM {
        return Err(Error::InvalidInput(format!(
            "dimension {} outside 1..={MAX_DIM}",
            m.dim()
        )));
    }
    Ok(dense_sym_eig(m.to_dense()))
}

/// Descending eigendecomposition of a dense symmetric matrix of any size.
pub(crate) fn dense_sym_eig(m: DMatrix<f64>) -> EigenPair {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    EigenPair { values, vectors }
}

pub fn lambda1(m: &SymmetricMatrix) -> Result<f64> {
    Ok(sym_eig(m)?.lambda1())
}

/// Default multiplicity tolerance, `1e-8 * max(1, |lambda1|)`.
pub fn default_mult_tol(lambda1: f64) -> f64 {
    1e-8 * lambda1.abs().max(1.0)
}

/// Gradient of `lambda1` at `m`: the rank-one projector onto the top eigenvector.
///
/// Fails with [`Error::DegenerateSpectrum`] when `lambda1 - lambda2 <= mult_tol`.
pub fn grad_lambda1(m: &SymmetricMatrix, mult_tol: f64) -> Result<SymmetricMatrix> {
    let eig = sym_eig(m)?;
    if m.dim() > 1 {
        let gap = eig.values[0] - eig.values[1];
        if gap <= mult_tol {
            return Err(Error::DegenerateSpectrum { gap });
        }
    }
    let u = eig.top_vector();
    Ok(SymmetricMatrix::outer(u.as_slice()))
}

/// Worst rank-one deficit over trace groups: `max_g (trace_g - sum_{i in g} lambda1(Y_i))`.
///
/// `groups[g]` lists the blocks of group `g`; `group_traces[g]` is its fixed trace.
pub fn eigenvalue_gap(groups: &[Vec<&SymmetricMatrix>], group_traces: &[f64]) -> Result<f64> {
    if groups.is_empty() || groups.iter().any(|g| g.is_empty()) {
        return Err(Error::InvalidInput("empty block list".into()));
    }
    if groups.len() != group_traces.len() {
        return Err(Error::InvalidInput(format!(
            "{} groups but {} traces",
            groups.len(),
            group_traces.len()
        )));
    }
    let mut worst = f64::NEG_INFINITY;
    for (blocks, &trace) in groups.iter().zip(group_traces) {
        let mut sum = 0.0;
        for b in blocks {
            sum += lambda1(b)?;
        }
        worst = worst.max(trace - sum);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(rng: &mut impl Rng, dim: usize) -> SymmetricMatrix {
        let mut m = SymmetricMatrix::zeros(dim);
        for i in 0..dim {
            for j in 0..=i {
                m.set(i, j, rng.gen_range(-1.0..1.0));
            }
        }
        m
    }

    #[test]
    fn storage_is_symmetric() {
        let mut m = SymmetricMatrix::zeros(3);
        m.set(0, 2, 4.0);
        assert_eq!(m.get(2, 0), 4.0);
        assert_eq!(m.get(0, 2), m.get(2, 0));
    }

    #[test]
    fn diagonal_eigenpairs() {
        let eig = sym_eig(&SymmetricMatrix::from_diagonal(&[1.0, 3.0, 2.0])).unwrap();
        assert_eq!(eig.values, vec![3.0, 2.0, 1.0]);
        for c in 0..3 {
            let col = eig.vectors.column(c);
            let ones = col.iter().filter(|x| (x.abs() - 1.0).abs() < 1e-15).count();
            assert_eq!(ones, 1, "column {c} is not a signed unit vector");
        }
        assert_abs_diff_eq!(eig.vectors[(1, 0)].abs(), 1.0);
    }

    #[test]
    fn zero_matrix_has_zero_spectrum() {
        let eig = sym_eig(&SymmetricMatrix::zeros(4)).unwrap();
        assert!(eig.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = random_symmetric(&mut rng, 7);
        let eig = sym_eig(&m).unwrap();
        let dense = m.to_dense();
        let err = (eig.reconstruct() - &dense).abs().max();
        assert!(err <= 1e-9 * dense.norm().max(1.0), "reconstruction {err}");
        let gram = eig.vectors.transpose() * &eig.vectors - DMatrix::identity(7, 7);
        assert!(gram.abs().max() <= 1e-10);
        assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn non_finite_rejected() {
        let mut m = SymmetricMatrix::zeros(2);
        m.set(1, 0, f64::NAN);
        assert!(matches!(sym_eig(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn gradient_of_diagonal() {
        let g = grad_lambda1(&SymmetricMatrix::from_diagonal(&[3.0, 0.0, 0.0]), 1e-8).unwrap();
        assert_eq!(g, SymmetricMatrix::outer(&[1.0, 0.0, 0.0]));
    }

    #[test]
    fn identity_is_degenerate() {
        let err = grad_lambda1(&SymmetricMatrix::identity(3), 1e-8).unwrap_err();
        assert!(matches!(err, Error::DegenerateSpectrum { .. }));
    }

    #[test]
    fn gradient_has_unit_trace_and_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let m = random_symmetric(&mut rng, 7);
            let Ok(g) = grad_lambda1(&m, 1e-8) else {
                continue;
            };
            assert_abs_diff_eq!(g.trace(), 1.0, epsilon = 1e-12);
            let eig = sym_eig(&g).unwrap();
            assert!(eig.values[1].abs() < 1e-12);
            assert!(eig.values.iter().all(|&v| v > -1e-12));
        }
    }

    #[test]
    fn gap_of_rank_one_and_scaled_identity() {
        let v = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        let rank_one = SymmetricMatrix::outer(&v);
        assert_abs_diff_eq!(
            eigenvalue_gap(&[vec![&rank_one]], &[3.0]).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        let spread = SymmetricMatrix::identity(7).scaled(3.0 / 7.0);
        assert_abs_diff_eq!(
            eigenvalue_gap(&[vec![&spread]], &[3.0]).unwrap(),
            18.0 / 7.0,
            epsilon = 1e-12
        );
        assert!(eigenvalue_gap(&[], &[]).is_err());
    }
}
