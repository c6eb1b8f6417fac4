//! Training the subspace neural network and checking its gradients.

use grass::construction::{Method, SubspaceSpec};
use grass::pipeline::{construct_dataset, evaluate, synthetic_utterances, train_snn_system};
use grass::snn::{gradient_check, random_check_case, SnnExample, SnnTrainConfig};
use grass::synthlab::{fixture_a, generate_task};

pub fn run_example() -> grass::Result<()> {
    let (model, batch) = random_check_case(1)?;
    let refs: Vec<&SnnExample> = batch.iter().collect();
    for (name, err) in gradient_check(&model, &refs)?.tensors {
        println!("gradient check {name:<18} {err:.2e}");
    }

    let mut spec = fixture_a();
    spec.train_per_language = 40;
    spec.test_per_language = 20;
    let (train, test) = generate_task(&spec)?;
    let sub = SubspaceSpec::new(Method::Olr, 3, 0.6);
    let train = construct_dataset(&synthetic_utterances(train, &spec), &sub, 1)?.dataset;
    let test = construct_dataset(&synthetic_utterances(test, &spec), &sub, 1)?.dataset;

    let cfg = SnnTrainConfig { m: 32, max_epochs: 30, seed: 3, ..SnnTrainConfig::default() };
    let system = train_snn_system(&train, &cfg)?;
    for e in system.log.iter().step_by(10) {
        println!("epoch {:>3}  lr {:.1e}  loss {:.4}", e.epoch, e.learning_rate, e.mean_loss);
    }
    println!("max map orthonormality error {:.2e}", system.model.max_map_orthonormality_error());
    let m = evaluate(&system.score(&test)?)?;
    println!("test EER {:.4}, Cavg {:.4}", m.eer, m.cavg);
    Ok(())
}

#[allow(dead_code)]
fn main() -> grass::Result<()> {
    run_example()
}
