//! EER, DET points, average cost and stratified folds on hand-made scores.

use grass::eval::{avg_cost, det_points, eer, stratified_kfold, Trial, TrialSet};

pub fn run_example() -> grass::Result<()> {
    let raw = [
        ("u1", "en", 2.1, true),
        ("u1", "fr", -0.3, false),
        ("u2", "en", 0.4, false),
        ("u2", "fr", 1.5, true),
        ("u3", "en", 0.9, true),
        ("u3", "fr", 0.8, false),
        ("u4", "en", -1.0, false),
        ("u4", "fr", 0.2, true),
    ];
    let trials = TrialSet::new(
        raw.iter()
            .map(|&(u, t, s, is_target)| Trial {
                utterance_id: u.into(),
                target_label: t.into(),
                score: s,
                is_target,
            })
            .collect(),
    )?;
    for (far, frr) in det_points(&trials)? {
        println!("FAR {far:.3}  FRR {frr:.3}");
    }
    println!("EER {:.4}  Cavg {:.4}", eer(&trials)?, avg_cost(&trials)?);

    let labels = ["en", "en", "en", "fr", "fr", "fr", "de", "de", "de"];
    for (i, fold) in stratified_kfold(&labels, 3, 0)?.iter().enumerate() {
        println!("fold {i}: test {:?}", fold.test);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> grass::Result<()> {
    run_example()
}
