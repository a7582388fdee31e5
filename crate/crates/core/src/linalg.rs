//! Small dense helpers on top of nalgebra, shared by the modules below.

use alloc::vec::Vec;
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    vals
}

/// Solves `m u = rhs` for symmetric positive definite `m`. Returns `None`
/// if the Cholesky factorization fails.
pub fn spd_solve(m: Matrix, rhs: &Vector) -> Option<Vector> {
    Cholesky::new(m).map(|c| c.solve(rhs))
}

pub fn norm(v: &Vector) -> f64 {
    libm::sqrt(v.dot(v))
}

pub fn norm_sq_blocks(blocks: &[Vector]) -> f64 {
    blocks.iter().map(|b| b.dot(b)).sum()
}

pub fn zeros(d: usize, count: usize) -> Vec<Vector> {
    (0..count).map(|_| Vector::zeros(d)).collect()
}

pub fn max_abs_diff_blocks(a: &[Vector], b: &[Vector]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).amax()).fold(0.0, f64::max)
}
