use rand_distr::{Distribution, StandardNormal};

use super::model::{SnnExample, SnnModel};
use crate::error::Result;
use crate::manifold::random_orthonormal_with;
use crate::seed;

pub const FD_STEP: f64 = 1e-5;

/// Worst per-entry relative error of each parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tensors: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.tensors.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }
}

/// Compares analytic gradients with central differences of the loss, entry by
/// entry: `|a − n| / max(|a| + |n|, 1e-8)`.
pub fn gradient_check(model: &SnnModel, batch: &[&SnnExample]) -> Result<GradCheckReport> {
    let analytic = model.backward(batch)?;
    let flat: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.to_vec()).collect();
    let names = model.tensor_names();
    let mut probe = model.clone();
    let mut tensors = Vec::with_capacity(flat.len());
    for (ti, grad) in flat.iter().enumerate() {
        let mut worst = 0.0f64;
        for k in 0..grad.len() {
            let orig = probe.tensors_mut()[ti][k];
            probe.tensors_mut()[ti][k] = orig + FD_STEP;
            let plus = probe.loss(batch)?;
            probe.tensors_mut()[ti][k] = orig - FD_STEP;
            let minus = probe.loss(batch)?;
            probe.tensors_mut()[ti][k] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = grad[k];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        tensors.push((names[ti].clone(), worst));
    }
    Ok(GradCheckReport { tensors })
}

/// A seeded random check case: two inputs of different size, a tanh hidden
/// layer, λ = 1e-2 and weight maps pushed off the Stiefel manifold so the
/// penalty gradient is exercised.
pub fn random_check_case(seed: u64) -> Result<(SnnModel, Vec<SnnExample>)> {
    let (dims, ranks, maps) = ([7, 5], [3, 2], 3);
    let mut model = SnnModel::init(&dims, &ranks, maps, &[4], 3, 1e-2, seed)?;
    let mut rng = seed::rng(seed::derive(seed, "perturb"));
    for l in 0..dims.len() {
        model.weight_bank_mut(l).mapv_inplace(|v| {
            let e: f64 = StandardNormal.sample(&mut rng);
            v + 0.1 * e
        });
    }
    let batch = (0..4)
        .map(|i| {
            Ok(SnnExample {
                inputs: vec![
                    random_orthonormal_with(dims[0], 3, &mut rng)?,
                    random_orthonormal_with(dims[1], 2, &mut rng)?,
                ],
                label: i % 3,
            })
        })
        .collect::<Result<_>>()?;
    Ok((model, batch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::random_orthonormal;

    #[test]
    fn random_cases_pass() {
        for seed in 0..3 {
            let (model, batch) = random_check_case(seed).unwrap();
            let refs: Vec<&SnnExample> = batch.iter().collect();
            assert!(gradient_check(&model, &refs).unwrap().max_relative_error() <= 1e-5);
        }
    }

    #[test]
    fn small_model_passes() {
        let mut model = SnnModel::init(&[5, 4], &[2, 3], 2, &[3], 3, 1e-2, 4).unwrap();
        model.weight_bank_mut(0).mapv_inplace(|v| v * 1.1 + 0.01);
        let batch: Vec<SnnExample> = (0..3)
            .map(|i| SnnExample {
                inputs: vec![random_orthonormal(5, 2, i).unwrap(), random_orthonormal(4, 3, 10 + i).unwrap()],
                label: i as usize,
            })
            .collect();
        let refs: Vec<&SnnExample> = batch.iter().collect();
        let report = gradient_check(&model, &refs).unwrap();
        assert_eq!(report.tensors.len(), 2 + 4);
        assert!(report.max_relative_error() <= 1e-5, "{report:?}");
    }
}
