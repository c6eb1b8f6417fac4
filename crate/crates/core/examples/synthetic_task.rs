//! Writing a synthetic task to disk and reading it back through the
//! posteriorgram and manifest formats.

use grass::phonetics::{load_posteriorgram, read_manifest};
use grass::synthlab::{make_task, TaskSpec};

pub fn run_example() -> grass::Result<()> {
    let fixture = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/fixture-a/task.txt");
    let mut spec = TaskSpec::load(fixture)?;
    spec.train_per_language = 5;
    spec.test_per_language = 2;

    let dir = std::env::temp_dir().join(format!("grass-synth-{}", std::process::id()));
    let out = make_task(&spec, &dir)?;
    println!("{} utterances, {} posteriorgram files", out.num_utterances, out.num_posteriorgrams);

    let train = read_manifest(&out.train_manifest)?;
    let first = &train[0];
    for path in &first.paths {
        let seq = load_posteriorgram(path)?;
        println!("{} [{}] {}x{} ({})", first.utterance_id, first.label, seq.num_phones(), seq.num_units(), seq.phoneset_id());
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> grass::Result<()> {
    run_example()
}
