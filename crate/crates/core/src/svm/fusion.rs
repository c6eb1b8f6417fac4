//! Multiclass logistic-regression fusion of raw detector scores.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionOptions {
    /// L2 strength on the non-bias weights.
    pub reg_strength: f64,
    /// Stop when the gradient norm falls below this.
    pub gradient_tol: f64,
    pub max_iterations: usize,
}

impl Default for FusionOptions {
    fn default() -> Self {
        FusionOptions {
            reg_strength: 1e-2,
            gradient_tol: 1e-6,
            max_iterations: 20_000,
        }
    }
}

/// Weights of shape `(inputs + 1)×T`; the last row is the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub weights: Array2<f64>,
    pub reg_strength: f64,
    /// Gradient norm at termination.
    pub gradient_norm: f64,
}

impl FusionModel {
    pub fn num_targets(&self) -> usize {
        self.weights.ncols()
    }

    pub fn num_inputs(&self) -> usize {
        self.weights.nrows() - 1
    }
}

fn augment(raw: &ArrayView2<f64>) -> Array2<f64> {
    let (n, p) = raw.dim();
    let mut x = Array2::ones((n, p + 1));
    x.slice_mut(s![.., ..p]).assign(raw);
    x
}

fn log_softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
}

/// Mean log-likelihood minus the penalty, and its gradient.
fn objective(x: &Array2<f64>, onehot: &Array2<f64>, w: &Array2<f64>, reg: f64) -> (f64, Array2<f64>) {
    let n = x.nrows() as f64;
    let mut logp = x.dot(w);
    log_softmax_rows(&mut logp);
    let ll = (&logp * onehot).sum() / n;
    let p = logp.mapv(f64::exp);
    let mut grad = x.t().dot(&(onehot - &p)) / n;
    let bias_row = w.nrows() - 1;
    let body = w.slice(s![..bias_row, ..]);
    let penalty = 0.5 * reg * body.iter().map(|v| v * v).sum::<f64>();
    grad.slice_mut(s![..bias_row, ..]).scaled_add(-reg, &body);
    (ll - penalty, grad)
}

/// Fits fusion weights by L-BFGS ascent on the L2-regularized multinomial
/// log-likelihood. `labels[i]` is the target index of row i.
pub fn fuse_scores(raw: &ArrayView2<f64>, labels: &[usize], opts: &FusionOptions) -> Result<FusionModel> {
    let (n, _) = raw.dim();
    if labels.len() != n || n == 0 {
        return Err(Error::Dimension(format!("{} labels for {n} score rows", labels.len())));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("raw scores must be finite".into()));
    }
    if !(opts.reg_strength >= 0.0) {
        return Err(Error::Config("fusion regularization must be >= 0".into()));
    }
    let t_count = labels.iter().max().unwrap() + 1;
    if t_count < 2 || labels.iter().all(|l| *l == labels[0]) {
        return Err(Error::Input("fusion needs at least two classes".into()));
    }
    let x = augment(raw);
    let mut onehot = Array2::zeros((n, t_count));
    for (i, &l) in labels.iter().enumerate() {
        onehot[[i, l]] = 1.0;
    }
    let shape = (x.ncols(), t_count);
    let f = |w: &Array1<f64>| {
        let wm = w.view().into_shape_with_order(shape).unwrap().to_owned();
        let (v, g) = objective(&x, &onehot, &wm, opts.reg_strength);
        // minimize the negative
        (-v, -Array1::from_iter(g.iter().copied()))
    };
    let (w, gnorm) = lbfgs_minimize(f, Array1::zeros(shape.0 * shape.1), opts.gradient_tol, opts.max_iterations);
    Ok(FusionModel {
        weights: w.into_shape_with_order(shape).unwrap(),
        reg_strength: opts.reg_strength,
        gradient_norm: gnorm,
    })
}

/// Per-target log-posteriors (N×T).
pub fn apply_fusion(model: &FusionModel, raw: &ArrayView2<f64>) -> Result<Array2<f64>> {
    if raw.ncols() != model.num_inputs() {
        return Err(Error::Dimension(format!(
            "fusion expects {} scores per row, got {}",
            model.num_inputs(),
            raw.ncols()
        )));
    }
    let mut logp = augment(raw).dot(&model.weights);
    log_softmax_rows(&mut logp);
    Ok(logp)
}

/// Limited-memory BFGS with Armijo backtracking. Returns the minimizer and
/// the final gradient norm.
fn lbfgs_minimize<F>(f: F, x0: Array1<f64>, tol: f64, max_iter: usize) -> (Array1<f64>, f64)
where
    F: Fn(&Array1<f64>) -> (f64, Array1<f64>),
{
    const MEMORY: usize = 10;
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut hist: Vec<(Array1<f64>, Array1<f64>, f64)> = Vec::new();
    for _ in 0..max_iter {
        let gnorm = g.dot(&g).sqrt();
        if gnorm <= tol {
            return (x, gnorm);
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * s.dot(&q);
            q.scaled_add(-a, y);
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.last() {
            q *= s.dot(y) / y.dot(y);
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.into_iter().rev()) {
            let b = rho * y.dot(&q);
            q.scaled_add(a - b, s);
        }
        let mut dir = -q;
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            dir = -g.clone();
            slope = -gnorm * gnorm;
            hist.clear();
        }
        let mut step = 1.0;
        let (x_new, f_new, g_new) = loop {
            let cand = &x + &(&dir * step);
            let (fc, gc) = f(&cand);
            if fc <= fx + 1e-4 * step * slope || step < 1e-20 {
                break (cand, fc, gc);
            }
            step *= 0.5;
        };
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-18 {
            if hist.len() == MEMORY {
                hist.remove(0);
            }
            hist.push((s, y, 1.0 / sy));
        }
        let stalled = f_new >= fx && step < 1e-20;
        x = x_new;
        fx = f_new;
        g = g_new;
        if stalled {
            break;
        }
    }
    let gnorm = g.dot(&g).sqrt();
    (x, gnorm)
}

/// Column-wise mean of the log-posteriors' exponentials; handy for checking
/// the large-regularization limit.
pub fn mean_posteriors(logp: &Array2<f64>) -> Array1<f64> {
    logp.mapv(f64::exp).mean_axis(Axis(0)).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identical_scores_give_uniform_posteriors_for_balanced_classes() {
        let raw = Array2::from_elem((6, 3), 0.7);
        let labels = [0, 1, 2, 0, 1, 2];
        let m = fuse_scores(&raw.view(), &labels, &FusionOptions::default()).unwrap();
        assert!(m.gradient_norm <= 1e-6);
        let logp = apply_fusion(&m, &raw.view()).unwrap();
        for v in logp.iter() {
            assert!((v.exp() - 1.0 / 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn heavy_regularization_recovers_priors() {
        let raw = array![[2.0, -1.0], [1.5, -0.5], [-1.0, 2.0], [0.3, 0.1]];
        let labels = [0, 0, 0, 1];
        let opts = FusionOptions {
            reg_strength: 1e9,
            ..FusionOptions::default()
        };
        let m = fuse_scores(&raw.view(), &labels, &opts).unwrap();
        assert!(m.weights.slice(s![..2, ..]).iter().all(|w| w.abs() < 1e-8));
        let post = mean_posteriors(&apply_fusion(&m, &raw.view()).unwrap());
        assert!((post[0] - 0.75).abs() < 1e-6, "{post}");
    }

    #[test]
    fn separable_scores_are_learned() {
        let raw = array![[3.0, -3.0], [2.0, -1.0], [-2.0, 2.5], [-1.0, 3.0]];
        let labels = [0, 0, 1, 1];
        let m = fuse_scores(&raw.view(), &labels, &FusionOptions::default()).unwrap();
        let logp = apply_fusion(&m, &raw.view()).unwrap();
        for (i, &l) in labels.iter().enumerate() {
            assert!(logp[[i, l]] > logp[[i, 1 - l]]);
        }
    }

    #[test]
    fn errors() {
        let raw = array![[1.0], [2.0]];
        assert!(fuse_scores(&raw.view(), &[1, 1], &FusionOptions::default()).is_err());
        assert!(fuse_scores(&raw.view(), &[0], &FusionOptions::default()).is_err());
        let m = fuse_scores(&raw.view(), &[0, 1], &FusionOptions::default()).unwrap();
        assert!(apply_fusion(&m, &array![[1.0, 2.0]].view()).is_err());
    }
}
