//! One synthetic utterance turned into a subspace by each construction method.

use grass::construction::{construct, Method, SubspaceSpec};
use grass::manifold::principal_angles;
use grass::synthlab::{emit_posteriors, sample_sequence, EmissionConfig, SyntheticLanguage};

pub fn run_example() -> grass::Result<()> {
    let lang = SyntheticLanguage::random("demo", 10, 2, 0.5, 7)?;
    let phones = sample_sequence(&lang, 150, 1)?;
    let seq = emit_posteriors(&phones, 10, &EmissionConfig::default(), "demo-10", 2)?;
    println!("posteriorgram {}x{}", seq.num_phones(), seq.num_units());

    let mut subspaces = Vec::new();
    for method in [Method::Olr, Method::Odl, Method::Dlm] {
        let spec = SubspaceSpec::new(method, 3, 0.6);
        let s = construct(&seq, &spec, 42)?;
        println!(
            "{method}: {}x{} basis, orthonormality error {:.1e}",
            s.ambient_dim(),
            s.rank(),
            s.orthonormality_error()
        );
        subspaces.push(s);
    }
    // OLR and ODL live in the same stacked space
    let cos = principal_angles(&subspaces[0], &subspaces[1])?;
    println!("OLR vs ODL cosines {:.4?}", cos.cosines());
    Ok(())
}

#[allow(dead_code)]
fn main() -> grass::Result<()> {
    run_example()
}
