use std::time::Instant;

use rand::seq::SliceRandom;

use super::model::{SnnExample, SnnGrads, SnnModel};
use crate::construction::sample_rank;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnnTrainConfig {
    pub learning_rate: f64,
    /// Epochs between learning-rate halvings.
    pub lr_halving_period: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub adam: AdamConfig,
    pub lambda_orth: f64,
    /// Weight maps per input.
    pub m: usize,
    /// Map rank ratio: `d'_l = max(floor(β·d_l), 2)`.
    pub beta: f64,
    /// Hidden widths of the optional MLP head; empty means linear softmax.
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for SnnTrainConfig {
    fn default() -> Self {
        SnnTrainConfig {
            learning_rate: 1e-3,
            lr_halving_period: 10,
            batch_size: 24,
            max_epochs: 200,
            adam: AdamConfig::default(),
            lambda_orth: 1e-9,
            m: 170,
            beta: 0.8,
            hidden: Vec::new(),
            seed: 0,
        }
    }
}

impl SnnTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.lr_halving_period == 0 {
            return Err(Error::Config("learning rate and halving period must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.m == 0 {
            return Err(Error::Config("batch size, epochs and m must be positive".into()));
        }
        if !(0.5..=1.5).contains(&self.beta) {
            return Err(Error::Config(format!("beta {} outside [0.5, 1.5]", self.beta)));
        }
        if !(self.lambda_orth >= 0.0) || !self.lambda_orth.is_finite() {
            return Err(Error::Config("lambda_orth must be finite and >= 0".into()));
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.epsilon > 0.0) {
            return Err(Error::Config("invalid Adam parameters".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

/// Learning rate at (0-based) epoch `e`: halved every `halving_period` epochs.
pub fn lr_at_epoch(initial: f64, halving_period: usize, epoch: usize) -> f64 {
    initial * 0.5f64.powi((epoch / halving_period) as i32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean of the mini-batch losses seen during the epoch.
    pub mean_loss: f64,
    /// `Σ‖WᵀW − I‖_F²` at the end of the epoch (without λ).
    pub penalty: f64,
    pub seconds: f64,
}

impl EpochLog {
    /// One log line: epoch, lr, mean loss, penalty, wall time.
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{:e}\t{:.10e}\t{:.10e}\t{:.3}",
            self.epoch, self.learning_rate, self.mean_loss, self.penalty, self.seconds
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: SnnModel,
    pub log: Vec<EpochLog>,
}

struct Adam {
    cfg: AdamConfig,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    fn new(cfg: AdamConfig, model: &mut SnnModel) -> Self {
        let sizes: Vec<usize> = model.tensors_mut().iter().map(|t| t.len()).collect();
        Adam {
            cfg,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    fn update(&mut self, model: &mut SnnModel, grads: &SnnGrads, lr: f64) {
        self.step += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.step);
        let bc2 = 1.0 - c.beta2.powi(self.step);
        for (i, (param, grad)) in model.tensors_mut().into_iter().zip(grads.tensors()).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for k in 0..param.len() {
                let g = grad[k];
                m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g;
                v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
                param[k] -= lr * (m[k] / bc1) / ((v[k] / bc2).sqrt() + c.epsilon);
            }
        }
    }
}

fn check_dataset(data: &[SnnExample]) -> Result<usize> {
    let first = data.first().ok_or_else(|| Error::Input("empty training set".into()))?;
    let num_classes = data.iter().map(|e| e.label).max().unwrap() + 1;
    let mut seen = vec![false; num_classes];
    for ex in data {
        if ex.inputs.len() != first.inputs.len() {
            return Err(Error::Dimension("examples disagree on the number of inputs".into()));
        }
        for (a, b) in ex.inputs.iter().zip(&first.inputs) {
            if a.ambient_dim() != b.ambient_dim() {
                return Err(Error::Dimension("examples disagree on input dimensions".into()));
            }
        }
        seen[ex.label] = true;
    }
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(Error::Input("need at least two classes".into()));
    }
    Ok(num_classes)
}

/// Trains a fresh model. Map ranks come from the first example's input
/// ranks through the β rule; the number of targets is `max label + 1`.
pub fn train(data: &[SnnExample], cfg: &SnnTrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let num_targets = check_dataset(data)?;
    let first = &data[0];
    let dims: Vec<usize> = first.inputs.iter().map(|s| s.ambient_dim()).collect();
    let ranks: Vec<usize> = first
        .inputs
        .iter()
        .map(|s| sample_rank(cfg.beta, s.rank()).min(s.ambient_dim()))
        .collect();
    let model = SnnModel::init(
        &dims,
        &ranks,
        cfg.m,
        &cfg.hidden,
        num_targets,
        cfg.lambda_orth,
        seed::derive(cfg.seed, "snn-init"),
    )?;
    train_from(model, data, cfg)
}

/// Trains an existing model for `cfg.max_epochs` epochs and returns the
/// final-epoch parameters.
pub fn train_from(mut model: SnnModel, data: &[SnnExample], cfg: &SnnTrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let num_classes = check_dataset(data)?;
    if num_classes > model.num_targets() {
        return Err(Error::Input("label exceeds the model's target count".into()));
    }
    model.lambda_orth = cfg.lambda_orth;
    let mut adam = Adam::new(cfg.adam, &mut model);
    let mut shuffle_rng = seed::rng(seed::derive(cfg.seed, "snn-shuffle"));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(cfg.max_epochs);
    for epoch in 0..cfg.max_epochs {
        let started = Instant::now();
        let lr = lr_at_epoch(cfg.learning_rate, cfg.lr_halving_period, epoch);
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&SnnExample> = chunk.iter().map(|&i| &data[i]).collect();
            let (grads, loss) = model.backward_with_loss(&batch)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("non-finite loss at epoch {epoch}")));
            }
            adam.update(&mut model, &grads, lr);
            loss_sum += loss;
            batches += 1;
        }
        log.push(EpochLog {
            epoch,
            learning_rate: lr,
            mean_loss: loss_sum / batches as f64,
            penalty: model.orthogonality_penalty(),
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainOutcome { model, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{random_orthonormal, Subspace};
    use ndarray::Array2;

    #[test]
    fn schedule_halves_every_period() {
        assert_eq!(lr_at_epoch(1e-3, 10, 0), 1e-3);
        assert_eq!(lr_at_epoch(1e-3, 10, 9), 1e-3);
        assert_eq!(lr_at_epoch(1e-3, 10, 10), 5e-4);
        assert_eq!(lr_at_epoch(1e-3, 10, 25), 2.5e-4);
    }

    #[test]
    fn defaults_match_reference_operating_point() {
        let cfg = SnnTrainConfig::default();
        assert_eq!((cfg.m, cfg.beta, cfg.lambda_orth), (170, 0.8, 1e-9));
        assert_eq!((cfg.batch_size, cfg.max_epochs), (24, 200));
        assert!(cfg.validate().is_ok());
        assert!(SnnTrainConfig { beta: 2.0, ..cfg }.validate().is_err());
    }

    fn axis_subspace(dim: usize, axes: &[usize]) -> Subspace {
        let mut b = Array2::zeros((dim, axes.len()));
        for (j, &a) in axes.iter().enumerate() {
            b[[a, j]] = 1.0;
        }
        Subspace::new(b, "axis").unwrap()
    }

    fn separable() -> Vec<SnnExample> {
        let mut out = Vec::new();
        for i in 0..24 {
            let q = random_orthonormal(2, 2, i).unwrap();
            let (label, axes) = if i % 2 == 0 { (0, [0, 1]) } else { (1, [4, 5]) };
            let base = axis_subspace(6, &axes);
            out.push(SnnExample { inputs: vec![base.reparameterized(&q.basis().view()).unwrap()], label });
        }
        out
    }

    #[test]
    fn rejects_single_class() {
        let mut data = separable();
        data.iter_mut().for_each(|e| e.label = 0);
        let cfg = SnnTrainConfig { m: 4, max_epochs: 1, ..Default::default() };
        assert!(train(&data, &cfg).is_err());
        assert!(train(&[], &cfg).is_err());
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let data = separable();
        let cfg = SnnTrainConfig {
            m: 6,
            max_epochs: 20,
            batch_size: 4,
            learning_rate: 1e-2,
            seed: 3,
            ..Default::default()
        };
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        let first = a.log.first().unwrap().mean_loss;
        let last = a.log.last().unwrap().mean_loss;
        assert!(last < 0.5 * first, "{first} -> {last}");
    }
}
