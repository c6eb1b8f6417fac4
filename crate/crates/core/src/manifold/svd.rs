//! Deterministic one-sided Jacobi SVD.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;
const ROTATION_TOL: f64 = 1e-15;

/// Thin singular value decomposition `X ≈ U·diag(σ)·Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    /// D×r, orthonormal columns.
    pub left: Array2<f64>,
    /// r values, non-negative, non-increasing.
    pub singular_values: Array1<f64>,
    /// K×r, orthonormal columns.
    pub right: Array2<f64>,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = &self.left * &self.singular_values.view().insert_axis(ndarray::Axis(0));
        scaled.dot(&self.right.t())
    }
}

/// The `r` leading singular triplets of `x`.
///
/// Columns are ordered by descending singular value (ties keep the order in
/// which Jacobi left them, which is deterministic). Each left singular vector
/// is signed so that its largest-magnitude entry is non-negative, the first
/// such entry winning ties; the matching right vector is flipped with it.
pub fn truncated_svd(x: &ArrayView2<f64>, r: usize) -> Result<SvdResult> {
    let (rows, cols) = x.dim();
    let max_rank = rows.min(cols);
    if r == 0 || r > max_rank {
        return Err(Error::Rank(format!(
            "requested {r} singular triplets of a {rows}x{cols} matrix"
        )));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Input("matrix has non-finite entries".into()));
    }

    // Work on whichever orientation has at least as many rows as columns, so the
    // rotated side is the short one.
    let (left_cols, sigma, right_cols) = if rows >= cols {
        let (u, s, v) = jacobi_tall(&columns_of(x), rows);
        (u, s, v)
    } else {
        let (u, s, v) = jacobi_tall(&columns_of(&x.t()), cols);
        (v, s, u)
    };

    let mut left = Array2::zeros((rows, r));
    let mut right = Array2::zeros((cols, r));
    let mut singular_values = Array1::zeros(r);
    for j in 0..r {
        let mut sign = 1.0;
        let mut best = -1.0;
        for &v in &left_cols[j] {
            if v.abs() > best {
                best = v.abs();
                sign = if v < 0.0 { -1.0 } else { 1.0 };
            }
        }
        for i in 0..rows {
            left[[i, j]] = sign * left_cols[j][i];
        }
        for i in 0..cols {
            right[[i, j]] = sign * right_cols[j][i];
        }
        singular_values[j] = sigma[j];
    }
    Ok(SvdResult {
        left,
        singular_values,
        right,
    })
}

/// Full SVD of a square matrix (all singular triplets).
pub fn full_svd(x: &ArrayView2<f64>) -> Result<SvdResult> {
    let r = x.nrows().min(x.ncols());
    truncated_svd(x, r)
}

fn columns_of(x: &ArrayView2<f64>) -> Vec<Vec<f64>> {
    (0..x.ncols()).map(|j| x.column(j).to_vec()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Hestenes one-sided Jacobi on a tall matrix given by its `n` columns of
/// length `m >= n`. Returns normalized left vectors (completed to an
/// orthonormal set where singular values vanish), singular values in
/// descending order, and right vectors, all as column lists.
fn jacobi_tall(cols: &[Vec<f64>], m: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>) {
    let n = cols.len();
    let mut a: Vec<Vec<f64>> = cols.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                let gamma = dot(&a[p], &a[q]);
                if gamma == 0.0 || gamma.abs() <= ROTATION_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = a.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let largest = norms.get(order[0]).copied().unwrap_or(0.0);
    let negligible = largest * (m.max(n) as f64) * f64::EPSILON;

    let mut left: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    let mut pending = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        let s = norms[j];
        if s > negligible && s > 0.0 {
            left.push(a[j].iter().map(|x| x / s).collect());
            sigma.push(s);
        } else {
            left.push(vec![0.0; m]);
            sigma.push(0.0);
            pending.push(slot);
        }
        right.push(v[j].clone());
    }
    if !pending.is_empty() {
        complete_basis(&mut left, &pending);
    }
    (left, sigma, right)
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    let cp = &mut head[p];
    let cq = &mut tail[0];
    for (xp, xq) in cp.iter_mut().zip(cq.iter_mut()) {
        let a = *xp;
        let b = *xq;
        *xp = c * a - s * b;
        *xq = s * a + c * b;
    }
}

/// Fills the `pending` slots with unit vectors orthogonal to every other
/// column, drawing candidates from the standard basis in index order and
/// keeping the one with the largest residual.
fn complete_basis(cols: &mut [Vec<f64>], pending: &[usize]) {
    let m = cols[0].len();
    for &slot in pending {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for e in 0..m {
            let mut cand = vec![0.0; m];
            cand[e] = 1.0;
            for _pass in 0..2 {
                for (k, other) in cols.iter().enumerate() {
                    if k == slot || other.iter().all(|x| *x == 0.0) {
                        continue;
                    }
                    let proj = dot(other, &cand);
                    for (c, o) in cand.iter_mut().zip(other) {
                        *c -= proj * o;
                    }
                }
            }
            let norm = dot(&cand, &cand).sqrt();
            if best.as_ref().is_none_or(|(b, _)| norm > *b + 1e-12) {
                best = Some((norm, cand));
            }
        }
        let (norm, mut cand) = best.expect("ambient dimension is positive");
        for c in &mut cand {
            *c /= norm;
        }
        cols[slot] = cand;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthonormality_error;
    use ndarray::array;

    #[test]
    fn diagonal_matrix_rank_one() {
        let x = array![[3.0, 0.0], [0.0, 1.0]];
        let svd = truncated_svd(&x.view(), 1).unwrap();
        assert_eq!(svd.singular_values[0], 3.0);
        assert_eq!(svd.left.column(0).to_vec(), vec![1.0, 0.0]);
        assert_eq!(svd.right.column(0).to_vec(), vec![1.0, 0.0]);
    }

    #[test]
    fn rank_one_outer_product() {
        let u = array![-0.6, 0.8];
        let v = array![0.0, -1.0, 0.0];
        let x = u.view().insert_axis(ndarray::Axis(1)).dot(&v.view().insert_axis(ndarray::Axis(0)));
        let svd = truncated_svd(&x.view(), 1).unwrap();
        assert!((svd.singular_values[0] - 1.0).abs() < 1e-14);
        // Largest-magnitude entry of u is 0.8, already non-negative.
        assert!((svd.left[[0, 0]] + 0.6).abs() < 1e-14);
        assert!((svd.left[[1, 0]] - 0.8).abs() < 1e-14);
        assert!((svd.right[[1, 0]] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn sign_convention_flips_negative_peaks() {
        let x = array![[0.0, 0.0], [0.0, -5.0]];
        let svd = truncated_svd(&x.view(), 1).unwrap();
        assert_eq!(svd.left.column(0).to_vec(), vec![0.0, 1.0]);
        assert_eq!(svd.right.column(0).to_vec(), vec![0.0, -1.0]);
    }

    #[test]
    fn rank_deficient_still_orthonormal() {
        let x = array![[1.0, 1.0, 1.0], [1.0, 1.0, 1.0], [0.0, 0.0, 0.0]];
        let svd = full_svd(&x.view()).unwrap();
        assert!(orthonormality_error(&svd.left.view()) < 1e-12);
        assert!(orthonormality_error(&svd.right.view()) < 1e-12);
        let recon = svd.reconstruct();
        assert!((&recon - &x).iter().all(|e| e.abs() < 1e-12));
        let zero = Array2::<f64>::zeros((3, 2));
        let svd = full_svd(&zero.view()).unwrap();
        assert!(orthonormality_error(&svd.left.view()) < 1e-12);
    }

    #[test]
    fn wide_and_tall_agree() {
        let x = array![[1.0, 2.0, 0.5, -1.0], [0.0, 1.0, 3.0, 2.0]];
        let wide = truncated_svd(&x.view(), 2).unwrap();
        let xt = x.t().to_owned();
        let tall = truncated_svd(&xt.view(), 2).unwrap();
        for j in 0..2 {
            assert!((wide.singular_values[j] - tall.singular_values[j]).abs() < 1e-12);
        }
        assert!((&wide.reconstruct() - &x).iter().all(|e| e.abs() < 1e-12));
    }

    #[test]
    fn errors() {
        let x = array![[1.0, 2.0]];
        assert!(matches!(truncated_svd(&x.view(), 0), Err(Error::Rank(_))));
        assert!(matches!(truncated_svd(&x.view(), 2), Err(Error::Rank(_))));
        let bad = array![[f64::NAN, 1.0]];
        assert!(matches!(truncated_svd(&bad.view(), 1), Err(Error::Input(_))));
    }
}
