//! Projection-kernel SVM backend.
//!
//! Kernel values between utterance subspaces are `‖SᵢᵀSⱼ‖_F²`, which is a
//! positive semi-definite kernel, so the Gram matrix can be handed to a
//! standard soft-margin dual solver. One binary model is trained per
//! (recognizer, target) pair and their scores are fused by multiclass
//! logistic regression.

mod fusion;
mod ovr;
mod smo;

use ndarray::Array2;
use rayon::prelude::*;

pub use fusion::{apply_fusion, fuse_scores, mean_posteriors, FusionModel, FusionOptions};
pub use ovr::{ovr_scores, train_ovr, OvrModels};
pub use smo::{svm_decision, train_binary_svm, train_binary_svm_with, SmoOptions, SmoReport, SvmModel};

use crate::error::{Error, Result};
use crate::linalg;
use crate::manifold::{projection_kernel, Subspace};

/// Symmetry tolerance for a Gram matrix.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Most negative eigenvalue tolerated.
pub const PSD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    values: Array2<f64>,
    row_ids: Vec<String>,
}

impl GramMatrix {
    pub fn new(values: Array2<f64>, row_ids: Vec<String>) -> Result<Self> {
        let n = values.nrows();
        if values.ncols() != n || row_ids.len() != n {
            return Err(Error::Dimension(format!(
                "gram is {:?} with {} ids",
                values.dim(),
                row_ids.len()
            )));
        }
        let asym = linalg::asymmetry(&values.view());
        if asym > SYMMETRY_TOL {
            return Err(Error::Numerical(format!("gram asymmetry {asym:.2e}")));
        }
        Ok(GramMatrix { values, row_ids })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn len(&self) -> usize {
        self.row_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_ids.is_empty()
    }

    /// Whether the smallest eigenvalue is at least `-PSD_TOL`.
    pub fn is_psd(&self) -> bool {
        linalg::is_psd_with_shift(&self.values.view(), PSD_TOL)
    }

    /// Sub-Gram over the given rows/columns.
    pub fn select(&self, idx: &[usize]) -> GramMatrix {
        let mut values = Array2::zeros((idx.len(), idx.len()));
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                values[[a, b]] = self.values[[i, j]];
            }
        }
        GramMatrix {
            values,
            row_ids: idx.iter().map(|&i| self.row_ids[i].clone()).collect(),
        }
    }
}

fn check_same_space(subspaces: &[&Subspace]) -> Result<()> {
    if let Some(first) = subspaces.first() {
        if let Some(bad) = subspaces.iter().find(|s| s.ambient_dim() != first.ambient_dim()) {
            return Err(Error::Dimension(format!(
                "mixed ambient dimensions {} and {}",
                first.ambient_dim(),
                bad.ambient_dim()
            )));
        }
    }
    Ok(())
}

/// Projection-kernel Gram matrix over one recognizer's subspaces.
pub fn compute_gram(subspaces: &[&Subspace], ids: Vec<String>) -> Result<GramMatrix> {
    check_same_space(subspaces)?;
    let n = subspaces.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if j < i {
                        0.0
                    } else {
                        projection_kernel(subspaces[i], subspaces[j]).expect("dims checked")
                    }
                })
                .collect()
        })
        .collect();
    let mut values = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            values[[i, j]] = rows[i][j];
            values[[j, i]] = rows[i][j];
        }
    }
    GramMatrix::new(values, ids)
}

/// Kernel rows of `queries` against `train` (queries × train).
pub fn cross_kernel(queries: &[&Subspace], train: &[&Subspace]) -> Result<Array2<f64>> {
    let all: Vec<&Subspace> = queries.iter().chain(train).copied().collect();
    check_same_space(&all)?;
    let rows: Vec<Vec<f64>> = queries
        .par_iter()
        .map(|q| {
            train
                .iter()
                .map(|t| projection_kernel(q, t).expect("dims checked"))
                .collect()
        })
        .collect();
    let mut out = Array2::zeros((queries.len(), train.len()));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    Ok(out)
}
