//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::config::Tolerances;
use crate::error::{Error, Result};

/// Solves `a x = b` by LU with partial pivoting and rejects the answer unless
/// `‖a x − b‖ ≤ tol.solve_residual · (1 + ‖b‖)`.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>, tol: &Tolerances) -> Option<DVector<f64>> {
    let x = a.clone().lu().solve(b)?;
    if !x.iter().all(|v| v.is_finite()) {
        return None;
    }
    let residual = (a * &x - b).norm();
    (residual <= tol.solve_residual * (1.0 + b.norm())).then_some(x)
}

/// Smallest eigenvalue of the symmetric part `(a + aᵀ) / 2`.
pub fn symmetric_part_min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Numerical rank with a cutoff relative to the largest singular value.
pub fn rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

pub(crate) fn check_finite(v: &DVector<f64>, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{what} has non-finite entries")))
    }
}

/// Row-major nested vectors from a matrix, for serialization.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Invalid("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}
