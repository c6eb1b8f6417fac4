//! Principal angles between two subspaces and the quantities built on them.

use grass::manifold::{
    principal_angles, projection_kernel, random_orthogonal, random_orthonormal, subspace_distance,
    subspace_similarity,
};
use grass::seed;

pub fn run_example() -> grass::Result<()> {
    let s1 = random_orthonormal(8, 3, 1)?;
    let s2 = random_orthonormal(8, 3, 2)?;

    let angles = principal_angles(&s1, &s2)?;
    println!("cosines   {:.4?}", angles.cosines());
    println!("angles    {:.4?}", angles.angles());

    let sim = subspace_similarity(&s1, &s2)?;
    let dist = subspace_distance(&s1, &s2)?;
    let k = projection_kernel(&s1, &s2)?;
    println!("similarity {sim:.6}  distance {dist:.6}  kernel {k:.6}");
    // dist² = 2d − 2·sim
    println!("2d - 2 sim - dist^2 = {:.2e}", 6.0 - 2.0 * sim - dist * dist);

    // the kernel only sees the span, not the basis
    let q = random_orthogonal(3, &mut seed::rng(3));
    let moved = s1.reparameterized(&q.view())?;
    println!("kernel after S1·Q     {:.6}", projection_kernel(&moved, &s2)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> grass::Result<()> {
    run_example()
}
