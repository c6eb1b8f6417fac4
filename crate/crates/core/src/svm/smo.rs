//! SMO for the soft-margin dual on a precomputed kernel, with
//! maximal-violating-pair working-set selection.

use ndarray::Array2;

use super::{GramMatrix, PSD_TOL};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoOptions {
    /// Stop when the maximal KKT violation `m(α) − M(α)` drops below this.
    pub tolerance: f64,
    /// Iteration budget, in units of the training-set size.
    pub max_sweeps: usize,
    /// Added to the Gram diagonal before solving.
    pub jitter: f64,
    /// Keep the dual objective after every pair update.
    pub record_objective: bool,
}

impl Default for SmoOptions {
    fn default() -> Self {
        SmoOptions {
            tolerance: 1e-3,
            max_sweeps: 10_000,
            jitter: 1e-10,
            record_objective: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    /// Signed coefficients `αᵢ·yᵢ` of the support vectors.
    pub dual_coefs: Vec<f64>,
    /// Indices of the support vectors in the training set.
    pub support_ids: Vec<usize>,
    pub bias: f64,
    pub penalty: f64,
    /// Size of the training set the kernel rows must cover.
    pub num_train: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoReport {
    pub iterations: usize,
    pub converged: bool,
    /// Final maximal violation `m(α) − M(α)`.
    pub kkt_gap: f64,
    /// Dual objective `Σα − ½αᵀQα` after each update, when requested.
    pub objective_trace: Vec<f64>,
}

pub fn train_binary_svm(gram: &GramMatrix, labels: &[i8], penalty: f64) -> Result<SvmModel> {
    train_binary_svm_with(gram, labels, penalty, &SmoOptions::default()).map(|(m, _)| m)
}

pub fn train_binary_svm_with(
    gram: &GramMatrix,
    labels: &[i8],
    penalty: f64,
    opts: &SmoOptions,
) -> Result<(SvmModel, SmoReport)> {
    let n = gram.len();
    if labels.len() != n {
        return Err(Error::Dimension(format!("{} labels for a {n}x{n} gram", labels.len())));
    }
    if labels.iter().any(|y| *y != 1 && *y != -1) {
        return Err(Error::Input("labels must be +1 or -1".into()));
    }
    if !labels.contains(&1) || !labels.contains(&-1) {
        return Err(Error::Input("both classes must be present".into()));
    }
    if !(penalty > 0.0) || !penalty.is_finite() {
        return Err(Error::Config(format!("penalty must be positive, got {penalty}")));
    }
    let k = gram.values();
    if !linalg::is_psd_with_shift(&k.view(), PSD_TOL + opts.jitter) {
        return Err(Error::Numerical(
            "gram matrix has eigenvalues below the PSD tolerance".into(),
        ));
    }

    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    let q = |i: usize, j: usize| -> f64 {
        let kij = k[[i, j]] + if i == j { opts.jitter } else { 0.0 };
        y[i] * y[j] * kij
    };
    let c = penalty;
    let mut alpha = vec![0.0f64; n];
    // gradient of ½αᵀQα − eᵀα
    let mut grad = vec![-1.0f64; n];
    let mut trace = Vec::new();

    let is_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let is_low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    let max_iter = opts.max_sweeps.saturating_mul(n.max(1));
    let mut iterations = 0;
    let mut gap;
    let mut converged = false;
    loop {
        let mut best_up = (f64::NEG_INFINITY, usize::MAX);
        let mut best_low = (f64::INFINITY, usize::MAX);
        for t in 0..n {
            let v = -y[t] * grad[t];
            if is_up(alpha[t], y[t]) && v > best_up.0 {
                best_up = (v, t);
            }
            if is_low(alpha[t], y[t]) && v < best_low.0 {
                best_low = (v, t);
            }
        }
        gap = best_up.0 - best_low.0;
        if gap <= opts.tolerance || best_up.1 == usize::MAX || best_low.1 == usize::MAX {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;
        let (i, j) = (best_up.1, best_low.1);

        // Solve the two-variable subproblem along y_i·Δα_i = −y_j·Δα_j.
        let quad = {
            let v = q(i, i) + q(j, j) - 2.0 * y[i] * y[j] * q(i, j);
            if v > 1e-12 {
                v
            } else {
                1e-12
            }
        };
        let old_i = alpha[i];
        let old_j = alpha[j];
        // step along the feasible direction d = (y_i, −y_j)
        let mut step = (-y[i] * grad[i] + y[j] * grad[j]) / quad;
        // box constraints for α_i + y_i·step and α_j − y_j·step
        let bound = |a: f64, dir: f64| -> f64 {
            if dir > 0.0 {
                c - a
            } else {
                a
            }
        };
        step = step.min(bound(old_i, y[i])).min(bound(old_j, -y[j]));
        let new_i = (old_i + y[i] * step).clamp(0.0, c);
        let new_j = (old_j - y[j] * step).clamp(0.0, c);
        let di = new_i - old_i;
        let dj = new_j - old_j;
        alpha[i] = new_i;
        alpha[j] = new_j;
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
        if opts.record_objective {
            trace.push(dual_objective(&alpha, &grad));
        }
    }

    let bias = -rho(&alpha, &grad, &y, c);
    let mut dual_coefs = Vec::new();
    let mut support_ids = Vec::new();
    for (t, &a) in alpha.iter().enumerate() {
        if a > 0.0 {
            dual_coefs.push(a * y[t]);
            support_ids.push(t);
        }
    }
    Ok((
        SvmModel {
            dual_coefs,
            support_ids,
            bias,
            penalty,
            num_train: n,
        },
        SmoReport {
            iterations,
            converged,
            kkt_gap: gap,
            objective_trace: trace,
        },
    ))
}

/// `Σα − ½αᵀQα`, using `G = Qα − e`.
fn dual_objective(alpha: &[f64], grad: &[f64]) -> f64 {
    -0.5 * alpha
        .iter()
        .zip(grad)
        .map(|(a, g)| a * (g - 1.0))
        .sum::<f64>()
}

/// Offset ρ with decision `f(x) = Σ αᵢyᵢK(xᵢ, x) − ρ`: the mean of `yᵢGᵢ` over
/// free vectors, or the midpoint of the feasible interval when none is free.
fn rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut sum_free = 0.0;
    let mut n_free = 0usize;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                upper = upper.min(yg);
            } else {
                lower = lower.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (upper + lower) / 2.0
    }
}

/// `Σ αᵢyᵢ·k(xᵢ, x) + b` for a kernel row against the whole training set.
pub fn svm_decision(model: &SvmModel, kernel_row: &[f64]) -> Result<f64> {
    if kernel_row.len() != model.num_train {
        return Err(Error::Dimension(format!(
            "kernel row has {} entries, model was trained on {}",
            kernel_row.len(),
            model.num_train
        )));
    }
    Ok(model
        .support_ids
        .iter()
        .zip(&model.dual_coefs)
        .map(|(&i, &a)| a * kernel_row[i])
        .sum::<f64>()
        + model.bias)
}

/// Decisions for every row of a queries × train kernel matrix.
pub fn decisions(model: &SvmModel, kernel_rows: &Array2<f64>) -> Result<Vec<f64>> {
    kernel_rows
        .rows()
        .into_iter()
        .map(|r| svm_decision(model, r.as_slice().expect("standard layout")))
        .collect()
}
