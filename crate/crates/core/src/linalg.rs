//! Small dense helpers shared by the numerical modules.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Squared Frobenius norm.
pub fn frobenius_sq(m: &ArrayView2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

pub fn frobenius(m: &ArrayView2<f64>) -> f64 {
    frobenius_sq(m).sqrt()
}

/// `‖XᵀX − I‖_F` for a matrix whose columns should be orthonormal.
pub fn orthonormality_error(x: &ArrayView2<f64>) -> f64 {
    let g = x.t().dot(x);
    let mut acc = 0.0;
    for ((i, j), v) in g.indexed_iter() {
        let e = if i == j { v - 1.0 } else { *v };
        acc += e * e;
    }
    acc.sqrt()
}

pub fn all_finite(x: &ArrayView2<f64>) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Column-orthonormalizes `x` in place by modified Gram-Schmidt with one
/// reorthogonalization pass. The implied R factor has a positive diagonal.
///
/// Fails if a column is numerically dependent on the previous ones.
pub fn gram_schmidt(x: &mut Array2<f64>) -> Result<()> {
    let (rows, cols) = x.dim();
    if cols > rows {
        return Err(Error::Rank(format!(
            "cannot orthonormalize {cols} columns in dimension {rows}"
        )));
    }
    for j in 0..cols {
        let original = x.column(j).dot(&x.column(j)).sqrt();
        for _pass in 0..2 {
            for i in 0..j {
                let proj = x.column(i).dot(&x.column(j));
                let qi = x.column(i).to_owned();
                x.column_mut(j).scaled_add(-proj, &qi);
            }
        }
        let norm = x.column(j).dot(&x.column(j)).sqrt();
        if !(norm > 1e-12 * original.max(f64::MIN_POSITIVE)) || norm == 0.0 {
            return Err(Error::Numerical(format!(
                "column {j} is linearly dependent on its predecessors"
            )));
        }
        x.column_mut(j).mapv_inplace(|v| v / norm);
    }
    Ok(())
}

/// Returns true when `a + shift·I` admits a Cholesky factorization, i.e. the
/// smallest eigenvalue of the symmetric matrix `a` is above `-shift`
/// (up to rounding in the factorization).
pub fn is_psd_with_shift(a: &ArrayView2<f64>, shift: f64) -> bool {
    let n = a.nrows();
    if a.ncols() != n {
        return false;
    }
    let mut l = vec![0.0f64; n * n];
    for j in 0..n {
        let mut diag = a[[j, j]] + shift;
        for k in 0..j {
            diag -= l[j * n + k] * l[j * n + k];
        }
        if !(diag > 0.0) {
            return false;
        }
        let ljj = diag.sqrt();
        l[j * n + j] = ljj;
        for i in (j + 1)..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = v / ljj;
        }
    }
    true
}

/// Maximum absolute asymmetry `max |a_ij − a_ji|`.
pub fn asymmetry(a: &ArrayView2<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    worst
}
