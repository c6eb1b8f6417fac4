//! Orthogonal dictionary learning: alternating hard-thresholded codes and a
//! Procrustes basis update, with the objective tracked per iteration.

use grass::construction::{construct_odl, construct_olr, OdlConfig};
use grass::manifold::principal_angles;
use grass::phonetics::stack_context;
use grass::synthlab::{emit_posteriors, sample_sequence, EmissionConfig, SyntheticLanguage};

pub fn run_example() -> grass::Result<()> {
    let lang = SyntheticLanguage::random("demo", 10, 2, 0.5, 3)?;
    let seq = emit_posteriors(&sample_sequence(&lang, 160, 4)?, 10, &EmissionConfig::default(), "p", 5)?;
    let z = stack_context(&seq, 2)?;
    let z = z.data().view();

    for lambda in [0.0, 1e-4, 0.2] {
        let cfg = OdlConfig { lambda_odl: lambda, iterations: 50 };
        let out = construct_odl(&z, 6, &cfg, 11)?;
        let zeros = out.loadings.iter().filter(|v| **v == 0.0).count();
        println!(
            "lambda {lambda:<6} objective {:.4} -> {:.4}  zero loadings {zeros}/{}  early stop {}",
            out.objective_trace[0],
            out.objective_trace.last().unwrap(),
            out.loadings.len(),
            out.early_stopped
        );
    }

    // without thresholding ODL converges towards the OLR span
    let olr = construct_olr(&z, 6)?;
    let odl = construct_odl(&z, 6, &OdlConfig { lambda_odl: 0.0, iterations: 500 }, 11)?;
    let min_cos = principal_angles(&olr, &odl.subspace)?.cosines().iter().copied().fold(1.0, f64::min);
    println!("smallest cosine to OLR span {min_cos:.8}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> grass::Result<()> {
    run_example()
}
