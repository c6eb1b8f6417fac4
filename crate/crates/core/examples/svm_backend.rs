//! Projection-kernel SVMs with one-vs-rest training and logistic-regression
//! score fusion on a small synthetic task.

use grass::construction::{Method, SubspaceSpec};
use grass::pipeline::{construct_dataset, dataset_grams, evaluate, synthetic_utterances, train_svm_system, SvmConfig};
use grass::synthlab::{fixture_a, generate_task};

pub fn run_example() -> grass::Result<()> {
    let mut spec = fixture_a();
    spec.train_per_language = 40;
    spec.test_per_language = 20;
    let (train, test) = generate_task(&spec)?;
    let (train, test) = (synthetic_utterances(train, &spec), synthetic_utterances(test, &spec));

    let sub = SubspaceSpec::new(Method::Olr, 3, 0.6);
    let train = construct_dataset(&train, &sub, 1)?.dataset;
    let test = construct_dataset(&test, &sub, 1)?.dataset;

    for (l, g) in dataset_grams(&train)?.iter().enumerate() {
        println!("recognizer {l}: Gram {0}x{0}, PSD {1}", g.len(), g.is_psd());
    }

    let system = train_svm_system(&train, &SvmConfig::default(), 7)?;
    for (c, e) in &system.penalty_scan {
        println!("C = {c:<5} dev EER {e:.4}");
    }
    let m = evaluate(&system.score(&test)?)?;
    println!("selected C = {}, test EER {:.4}, Cavg {:.4}", system.penalty, m.eer, m.cavg);
    Ok(())
}

#[allow(dead_code)]
fn main() -> grass::Result<()> {
    run_example()
}
