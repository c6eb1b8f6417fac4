//! Identifying a dynamic linear model from noise-free observations, and the
//! orthogonal Procrustes step it relies on.

use grass::construction::{dlm_observability, identify_dlm, DlmModel};
use grass::manifold::{orthogonal_procrustes, random_orthogonal, random_orthonormal};
use grass::seed;
use ndarray::Array2;

pub fn run_example() -> grass::Result<()> {
    let (m, d, k) = (8, 3, 40);
    let mut rng = seed::rng(5);
    let a = random_orthogonal(d, &mut rng);
    let c = random_orthonormal(m, d, 6)?.into_basis();
    let truth = DlmModel::new(a, c)?;

    // x_{k+1} = A x_k, y_k = C x_k
    let mut states = Array2::zeros((d, k));
    states.column_mut(0).fill(1.0);
    for j in 1..k {
        let next = truth.transition().dot(&states.column(j - 1));
        states.column_mut(j).assign(&next);
    }
    let y = truth.generator().dot(&states);

    let fit = identify_dlm(&y.view(), d)?;
    let recon = fit.model.generator().dot(&fit.states);
    let rel = (&recon - &y).mapv(|v| v * v).sum().sqrt() / y.mapv(|v| v * v).sum().sqrt();
    println!("reconstruction relative error {rel:.2e}");

    let pred = fit.model.transition().dot(&fit.states.slice(ndarray::s![.., ..k - 1]));
    let resid = (&pred - &fit.states.slice(ndarray::s![.., 1..])).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b));
    println!("one-step prediction residual  {resid:.2e}");

    let obs = dlm_observability(&fit.model, 3)?;
    println!("observability subspace {}x{}", obs.ambient_dim(), obs.rank());

    // Procrustes recovers a rotation from paired columns
    let r = random_orthogonal(4, &mut rng);
    let x = random_orthonormal(4, 4, 9)?.into_basis();
    let recovered = orthogonal_procrustes(&x.view(), &r.dot(&x).view())?;
    println!("Procrustes error {:.2e}", (&recovered - &r).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b)));
    Ok(())
}

#[allow(dead_code)]
fn main() -> grass::Result<()> {
    run_example()
}
