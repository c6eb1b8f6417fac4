use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::manifold::{random_orthonormal_with, Subspace};
use crate::seed;

/// One labelled utterance: L subspaces (one per recognizer) and a target index.
#[derive(Debug, Clone, PartialEq)]
pub struct SnnExample {
    pub inputs: Vec<Subspace>,
    pub label: usize,
}

/// Fully connected layer `y = Wᵀx + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// in×out
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn glorot(fan_in: usize, fan_out: usize, rng: &mut seed::Rng) -> Dense {
        let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        Dense {
            weights: Array2::from_shape_simple_fn((fan_in, fan_out), || normal.sample(&mut *rng)),
            bias: Array1::zeros(fan_out),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnnModel {
    /// Per input l, the m weight maps side by side: D_l×(m·d'_l); map j owns
    /// columns `j·d'_l .. (j+1)·d'_l`.
    pub(crate) maps: Vec<Array2<f64>>,
    pub(crate) map_ranks: Vec<usize>,
    pub(crate) maps_per_input: usize,
    /// Dense layers after the kernel layer; tanh between layers, none after
    /// the last. A single layer is the plain linear-softmax head.
    pub(crate) head: Vec<Dense>,
    pub lambda_orth: f64,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// `W_lᵀS_l` per input, (m·d'_l)×d_l.
    projections: Vec<Array2<f64>>,
    /// Kernel scores, length L·m, input-major.
    pub scores: Array1<f64>,
    /// Activations entering each dense layer (first is `scores`).
    activations: Vec<Array1<f64>>,
    pub logits: Array1<f64>,
    pub log_posteriors: Array1<f64>,
}

impl Forward {
    pub fn posteriors(&self) -> Array1<f64> {
        self.log_posteriors.mapv(f64::exp)
    }
}

/// Gradients with the same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SnnGrads {
    pub maps: Vec<Array2<f64>>,
    pub head: Vec<Dense>,
}

impl SnnGrads {
    fn zeros_like(model: &SnnModel) -> Self {
        SnnGrads {
            maps: model.maps.iter().map(|m| Array2::zeros(m.raw_dim())).collect(),
            head: model
                .head
                .iter()
                .map(|l| Dense {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    fn add_assign(&mut self, other: &SnnGrads) {
        for (a, b) in self.maps.iter_mut().zip(&other.maps) {
            *a += b;
        }
        for (a, b) in self.head.iter_mut().zip(&other.head) {
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
    }

    /// Flat views in the canonical parameter order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.maps.iter().map(|m| m.as_slice().unwrap()).collect();
        for l in &self.head {
            out.push(l.weights.as_slice().unwrap());
            out.push(l.bias.as_slice().unwrap());
        }
        out
    }
}

fn log_softmax(x: &Array1<f64>) -> Array1<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    x.mapv(|v| v - lse)
}

impl SnnModel {
    /// Fresh model: Haar-orthonormal weight maps, Glorot-normal head, zero
    /// biases. `input_dims[l]` is D_l and `map_ranks[l]` is d'_l.
    pub fn init(
        input_dims: &[usize],
        map_ranks: &[usize],
        maps_per_input: usize,
        hidden: &[usize],
        num_targets: usize,
        lambda_orth: f64,
        seed: u64,
    ) -> Result<Self> {
        if input_dims.is_empty() || input_dims.len() != map_ranks.len() {
            return Err(Error::Config("need one map rank per input".into()));
        }
        if maps_per_input == 0 || num_targets < 2 {
            return Err(Error::Config("need m >= 1 maps and at least two targets".into()));
        }
        if !(lambda_orth >= 0.0) {
            return Err(Error::Config("orthogonality weight must be >= 0".into()));
        }
        let mut rng = seed::rng(seed);
        let mut maps = Vec::with_capacity(input_dims.len());
        for (&dim, &rank) in input_dims.iter().zip(map_ranks) {
            if rank == 0 || rank > dim {
                return Err(Error::Rank(format!("map rank {rank} outside 1..={dim}")));
            }
            let mut bank = Array2::zeros((dim, maps_per_input * rank));
            for j in 0..maps_per_input {
                let w = random_orthonormal_with(dim, rank, &mut rng)?;
                bank.slice_mut(s![.., j * rank..(j + 1) * rank]).assign(w.basis());
            }
            maps.push(bank);
        }
        let mut widths = vec![input_dims.len() * maps_per_input];
        widths.extend_from_slice(hidden);
        widths.push(num_targets);
        let head = widths
            .windows(2)
            .map(|w| Dense::glorot(w[0], w[1], &mut rng))
            .collect();
        Ok(SnnModel {
            maps,
            map_ranks: map_ranks.to_vec(),
            maps_per_input,
            head,
            lambda_orth,
        })
    }

    pub fn num_inputs(&self) -> usize {
        self.maps.len()
    }

    pub fn maps_per_input(&self) -> usize {
        self.maps_per_input
    }

    pub fn map_rank(&self, input: usize) -> usize {
        self.map_ranks[input]
    }

    pub fn input_dim(&self, input: usize) -> usize {
        self.maps[input].nrows()
    }

    pub fn num_targets(&self) -> usize {
        self.head.last().unwrap().bias.len()
    }

    pub fn head(&self) -> &[Dense] {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut [Dense] {
        &mut self.head
    }

    /// Weight bank of input l (all m maps side by side).
    pub fn weight_bank(&self, input: usize) -> &Array2<f64> {
        &self.maps[input]
    }

    pub fn weight_bank_mut(&mut self, input: usize) -> &mut Array2<f64> {
        &mut self.maps[input]
    }

    pub fn weight_map(&self, input: usize, j: usize) -> ndarray::ArrayView2<'_, f64> {
        let r = self.map_ranks[input];
        self.maps[input].slice(s![.., j * r..(j + 1) * r])
    }

    /// Flat mutable views in the canonical parameter order: weight banks,
    /// then (weights, bias) of each dense layer.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.maps.iter_mut().map(|m| m.as_slice_mut().unwrap()).collect();
        for l in &mut self.head {
            out.push(l.weights.as_slice_mut().unwrap());
            out.push(l.bias.as_slice_mut().unwrap());
        }
        out
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.maps.len()).map(|l| format!("maps[{l}]")).collect();
        for i in 0..self.head.len() {
            names.push(format!("head[{i}].weights"));
            names.push(format!("head[{i}].bias"));
        }
        names
    }

    fn check_sample(&self, inputs: &[Subspace]) -> Result<()> {
        if inputs.len() != self.maps.len() {
            return Err(Error::Dimension(format!(
                "model has {} inputs, sample has {}",
                self.maps.len(),
                inputs.len()
            )));
        }
        for (l, s) in inputs.iter().enumerate() {
            if s.ambient_dim() != self.maps[l].nrows() {
                return Err(Error::Dimension(format!(
                    "input {l} lives in R^{}, weight maps in R^{}",
                    s.ambient_dim(),
                    self.maps[l].nrows()
                )));
            }
        }
        Ok(())
    }

    /// Kernel scores `‖W_ljᵀS_l‖_F²`, input-major.
    pub fn kernel_layer_forward(&self, inputs: &[Subspace]) -> Result<Array1<f64>> {
        Ok(self.forward(inputs)?.scores)
    }

    pub fn forward(&self, inputs: &[Subspace]) -> Result<Forward> {
        self.check_sample(inputs)?;
        let m = self.maps_per_input;
        let mut scores = Array1::zeros(self.maps.len() * m);
        let mut projections = Vec::with_capacity(self.maps.len());
        for (l, (bank, s)) in self.maps.iter().zip(inputs).enumerate() {
            let p = bank.t().dot(s.basis());
            let r = self.map_ranks[l];
            for j in 0..m {
                scores[l * m + j] = p.slice(s![j * r..(j + 1) * r, ..]).iter().map(|v| v * v).sum();
            }
            projections.push(p);
        }
        let mut activations = Vec::with_capacity(self.head.len());
        let mut x = scores.clone();
        for (i, layer) in self.head.iter().enumerate() {
            activations.push(x.clone());
            let mut y = layer.weights.t().dot(&x) + &layer.bias;
            if i + 1 < self.head.len() {
                y.mapv_inplace(f64::tanh);
            }
            x = y;
        }
        let log_posteriors = log_softmax(&x);
        Ok(Forward {
            projections,
            scores,
            activations,
            logits: x,
            log_posteriors,
        })
    }

    /// `Σ_{l,j} ‖W_ljᵀW_lj − I‖_F²` (without the λ factor).
    pub fn orthogonality_penalty(&self) -> f64 {
        let mut total = 0.0;
        for (l, bank) in self.maps.iter().enumerate() {
            let r = self.map_ranks[l];
            for j in 0..self.maps_per_input {
                let w = bank.slice(s![.., j * r..(j + 1) * r]);
                let g = w.t().dot(&w);
                for ((a, b), v) in g.indexed_iter() {
                    let e = if a == b { v - 1.0 } else { *v };
                    total += e * e;
                }
            }
        }
        total
    }

    /// Largest `‖W_ljᵀW_lj − I‖_F` over all maps.
    pub fn max_map_orthonormality_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for l in 0..self.maps.len() {
            for j in 0..self.maps_per_input {
                worst = worst.max(crate::linalg::orthonormality_error(&self.weight_map(l, j)));
            }
        }
        worst
    }

    fn cross_entropy(&self, batch: &[&SnnExample]) -> Result<f64> {
        let mut total = 0.0;
        for ex in batch {
            if ex.label >= self.num_targets() {
                return Err(Error::Input(format!("label {} out of range", ex.label)));
            }
            total -= self.forward(&ex.inputs)?.log_posteriors[ex.label];
        }
        Ok(total / batch.len() as f64)
    }

    /// Mean cross-entropy over the batch plus `λ·Σ‖WᵀW − I‖_F²`.
    pub fn loss(&self, batch: &[&SnnExample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        Ok(self.cross_entropy(batch)? + self.lambda_orth * self.orthogonality_penalty())
    }

    /// Cross-entropy gradient of a single example (not divided by the batch
    /// size) and its loss.
    fn example_grads(&self, ex: &SnnExample) -> Result<(SnnGrads, f64)> {
        if ex.label >= self.num_targets() {
            return Err(Error::Input(format!("label {} out of range", ex.label)));
        }
        let fwd = self.forward(&ex.inputs)?;
        let mut grads = SnnGrads::zeros_like(self);
        // d(−log p_y)/d logits = p − onehot
        let mut delta = fwd.posteriors();
        delta[ex.label] -= 1.0;
        for i in (0..self.head.len()).rev() {
            let input = &fwd.activations[i];
            let layer = &self.head[i];
            grads.head[i].weights = outer(input.view(), delta.view());
            grads.head[i].bias = delta.clone();
            let mut back = layer.weights.dot(&delta);
            if i > 0 {
                // input of layer i is tanh(output of layer i-1)
                back.zip_mut_with(input, |b, a| *b *= 1.0 - a * a);
            }
            delta = back;
        }
        // delta now holds dL/dk
        let m = self.maps_per_input;
        for (l, s) in ex.inputs.iter().enumerate() {
            let r = self.map_ranks[l];
            let mut scaled = fwd.projections[l].clone();
            for j in 0..m {
                let g = 2.0 * delta[l * m + j];
                scaled.slice_mut(s![j * r..(j + 1) * r, ..]).mapv_inplace(|v| v * g);
            }
            // d k_lj / d W_lj = 2·S·Sᵀ·W_lj = 2·S·(W_ljᵀS)ᵀ
            grads.maps[l] = s.basis().dot(&scaled.t());
        }
        Ok((grads, -fwd.log_posteriors[ex.label]))
    }

    /// Analytic gradients of [`SnnModel::loss`].
    pub fn backward(&self, batch: &[&SnnExample]) -> Result<SnnGrads> {
        self.backward_with_loss(batch).map(|(g, _)| g)
    }

    /// Gradients and the loss value, computing per-example terms in parallel
    /// and summing them in batch order.
    pub fn backward_with_loss(&self, batch: &[&SnnExample]) -> Result<(SnnGrads, f64)> {
        use rayon::prelude::*;
        if batch.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        let parts: Vec<(SnnGrads, f64)> = batch
            .par_iter()
            .map(|ex| self.example_grads(ex))
            .collect::<Result<_>>()?;
        let mut grads = SnnGrads::zeros_like(self);
        let mut ce = 0.0;
        for (g, l) in &parts {
            grads.add_assign(g);
            ce += l;
        }
        let scale = 1.0 / batch.len() as f64;
        for g in &mut grads.maps {
            *g *= scale;
        }
        for layer in &mut grads.head {
            layer.weights *= scale;
            layer.bias *= scale;
        }
        // penalty: d/dW λ‖WᵀW − I‖² = 4λ·W(WᵀW − I)
        if self.lambda_orth > 0.0 {
            for (l, bank) in self.maps.iter().enumerate() {
                let r = self.map_ranks[l];
                for j in 0..self.maps_per_input {
                    let w = bank.slice(s![.., j * r..(j + 1) * r]);
                    let mut gram = w.t().dot(&w);
                    gram.diag_mut().mapv_inplace(|v| v - 1.0);
                    let pg = w.dot(&gram) * (4.0 * self.lambda_orth);
                    let mut target = grads.maps[l].slice_mut(s![.., j * r..(j + 1) * r]);
                    target += &pg;
                }
            }
        }
        let loss = ce * scale + self.lambda_orth * self.orthogonality_penalty();
        Ok((grads, loss))
    }
}

fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    a.insert_axis(Axis(1)).dot(&b.insert_axis(Axis(0)))
}

/// Per-target log-posteriors, the detection scores of the network.
pub fn detection_scores(model: &SnnModel, inputs: &[Subspace]) -> Result<Array1<f64>> {
    Ok(model.forward(inputs)?.log_posteriors)
}
