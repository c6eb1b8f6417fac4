//! Training behaviour of the subspace network on small separable data.

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use grass::manifold::Subspace;
use grass::seed;
use grass::snn::{detection_scores, train, SnnExample, SnnTrainConfig};

/// Orthonormal basis of `M + noise`, via nalgebra's QR.
fn noisy_span(center: &Array2<f64>, noise: f64, rng: &mut seed::Rng) -> Subspace {
    let (r, c) = center.dim();
    let m = DMatrix::from_fn(r, c, |i, j| center[[i, j]] + noise * rng.sample::<f64, _>(StandardNormal));
    let q = m.qr().q();
    Subspace::new(Array2::from_shape_fn((r, c), |(i, j)| q[(i, j)]), "toy").unwrap()
}

/// Three classes, each a cloud of 2-dimensional subspaces around a class
/// center in R⁸; two inputs per example.
fn separable(per_class: usize, seed_value: u64) -> Vec<SnnExample> {
    let mut rng = seed::rng(seed_value);
    let centers: Vec<Array2<f64>> = (0..3)
        .map(|c| Array2::from_shape_fn((8, 2), |(i, j)| if i == 2 * c + j { 1.0 } else { 0.0 }))
        .collect();
    let mut out = Vec::new();
    for k in 0..per_class {
        for (label, center) in centers.iter().enumerate() {
            let _ = k;
            out.push(SnnExample {
                inputs: vec![noisy_span(center, 0.15, &mut rng), noisy_span(center, 0.15, &mut rng)],
                label,
            });
        }
    }
    out
}

fn config(epochs: usize, lambda: f64) -> SnnTrainConfig {
    SnnTrainConfig {
        learning_rate: 1e-2,
        max_epochs: epochs,
        m: 6,
        beta: 1.0,
        lambda_orth: lambda,
        seed: 4,
        ..SnnTrainConfig::default()
    }
}

#[test]
fn loss_halves_within_twenty_epochs() {
    let data = separable(30, 1);
    let out = train(&data, &config(20, 1e-9)).unwrap();
    let first = out.log.first().unwrap().mean_loss;
    let last = out.log.last().unwrap().mean_loss;
    assert!(last <= 0.5 * first, "loss {first} -> {last}");
}

#[test]
fn target_scores_highest_on_held_out_samples() {
    let data = separable(30, 1);
    let test = separable(40, 2);
    let model = train(&data, &config(20, 1e-9)).unwrap().model;
    let correct = test
        .iter()
        .filter(|ex| {
            let s = detection_scores(&model, &ex.inputs).unwrap();
            let best = s.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
            best == ex.label
        })
        .count();
    let rate = correct as f64 / test.len() as f64;
    assert!(rate >= 0.95, "top-1 rate {rate}");
}

#[test]
fn penalty_keeps_maps_closer_to_orthonormal() {
    let data = separable(30, 1);
    let free = train(&data, &config(30, 0.0)).unwrap().model;
    let held = train(&data, &config(30, 1e-1)).unwrap().model;
    let (e_free, e_held) = (free.max_map_orthonormality_error(), held.max_map_orthonormality_error());
    assert!(e_held < e_free, "lambda=0.1: {e_held}, lambda=0: {e_free}");
}
