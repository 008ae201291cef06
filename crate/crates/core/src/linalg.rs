//! Small dense helpers for symmetric matrices with badly mixed scales.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `(A + A^T) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Diagonal scaling `d_i = 1 / sqrt(A_ii)`; zero or negative diagonals are an error.
pub fn equilibration(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    (0..a.nrows())
        .map(|i| {
            let d = a[(i, i)];
            if d > 0.0 && d.is_finite() {
                Ok(1.0 / d.sqrt())
            } else {
                Err(Error::Singular(format!("diagonal entry {i} is {d}")))
            }
        })
        .collect()
}

/// `D A D` for a diagonal scaling vector.
pub fn scale(a: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * d[i] * d[j])
}

/// Inverse of a symmetric positive definite matrix through an equilibrated
/// Cholesky factorization.
pub fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} is not square",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let d = equilibration(a)?;
    let s = symmetrize(&scale(a, &d));
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::Singular("matrix is not positive definite".into()))?;
    Ok(scale(&chol.inverse(), &d))
}

/// Eigenvalues of the equilibrated matrix, ascending.
pub fn equilibrated_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    let d = equilibration(a)?;
    let mut ev: Vec<f64> = symmetrize(&scale(a, &d))
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Submatrix on the given rows and columns.
pub fn select(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

/// Frobenius norm of `a - b` relative to `scale`.
pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>, scale: f64) -> f64 {
    let n = (a - b).norm();
    if n == 0.0 {
        0.0
    } else {
        n / scale
    }
}
