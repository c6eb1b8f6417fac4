//! The full chain on the standard fixture: synthesize, build subspaces on
//! disk, train both back-ends, score and evaluate.

use grass::pipeline::{
    construct_dataset, load_archive, load_utterances, save_archive, train_system, write_evaluation, Backend,
    RunConfig, System,
};
use grass::synthlab::{fixture_a, make_task};
use grass::seed;

pub fn run_example() -> grass::Result<()> {
    let dir = std::env::temp_dir().join(format!("grass-e2e-{}", std::process::id()));
    let task = make_task(&fixture_a(), dir.join("task"))?;

    let mut cfg = RunConfig::default();
    cfg.snn.max_epochs = 60;
    let construct_seed = seed::derive(cfg.seed, "construct");
    for (manifest, name) in [(&task.train_manifest, "train"), (&task.test_manifest, "test")] {
        let report = construct_dataset(&load_utterances(manifest)?, &cfg.subspace, construct_seed)?;
        save_archive(&report.dataset, &cfg.subspace, dir.join(name))?;
    }
    let train = load_archive(dir.join("train"))?;
    let test = load_archive(dir.join("test"))?;

    for backend in [Backend::Svm, Backend::Snn] {
        cfg.backend = backend;
        let model_dir = dir.join(format!("model-{backend}"));
        train_system(&train, &cfg)?.save(&model_dir)?;
        let trials = System::load(&model_dir)?.score(&test)?;
        let m = write_evaluation(&trials, dir.join(format!("eval-{backend}")))?;
        println!("{backend}: EER {:.4}  Cavg {:.4}  over {} trials", m.eer, m.cavg, m.num_trials);
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> grass::Result<()> {
    run_example()
}
