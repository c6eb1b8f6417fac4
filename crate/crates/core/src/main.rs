use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use grass::pipeline::{self, RunConfig, System};
use grass::snn::{gradient_check, random_check_case, SnnExample};
use grass::synthlab::{self, TaskSpec};
use grass::{eval::TrialSet, seed, Error, Result};

#[derive(Parser)]
#[command(name = "grass", version, about = "Grassmann subspace language recognition pipeline")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key=value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key (repeatable); beats the config file
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Subspace construction method: olr, odl or dlm
    #[arg(long, global = true)]
    method: Option<String>,
    /// Context order n
    #[arg(long = "context-order", global = true)]
    context_order: Option<usize>,
    /// Sample subspace ratio α
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Back-end for sweep: svm or snn
    #[arg(long, global = true)]
    backend: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic task (manifests + posteriorgrams)
    Synth {
        /// Task spec file; alternatively --fixture
        #[arg(long, conflicts_with = "fixture")]
        spec: Option<PathBuf>,
        /// Built-in task: fixture-a, control or trigram
        #[arg(long)]
        fixture: Option<String>,
        /// Also write the task spec next to the data
        #[arg(long)]
        write_spec: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write context-stacked phonetic matrices
    Featurize {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build one subspace per (utterance, recognizer)
    Construct {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Projection-kernel Gram matrices of a subspace archive
    Gram {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the one-vs-rest SVMs and score fusion
    TrainSvm {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the subspace neural network
    TrainSnn {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a subspace archive with a trained model
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// EER, average cost and DET points of a score file
    Eval {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of the network gradients
    Gradcheck,
    /// Grid search over n, α, β, m and λ
    Sweep {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&c.overrides)?;
    let flags = [
        ("seed", c.seed.map(|v| v.to_string())),
        ("method", c.method.clone()),
        ("n", c.context_order.map(|v| v.to_string())),
        ("alpha", c.alpha.map(|v| v.to_string())),
        ("backend", c.backend.clone()),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn task_spec(spec: Option<&Path>, fixture: Option<&str>) -> Result<TaskSpec> {
    match (spec, fixture) {
        (Some(p), _) => {
            if !p.is_file() {
                return Err(Error::Config(format!("task spec `{}` not found", p.display())));
            }
            TaskSpec::load(p)
        }
        (None, Some("fixture-a")) => Ok(synthlab::fixture_a()),
        (None, Some("control")) => Ok(synthlab::control_fixture()),
        (None, Some("trigram")) => Ok(synthlab::trigram_fixture()),
        (None, Some(other)) => Err(Error::Config(format!("unknown fixture `{other}`"))),
        (None, None) => Err(Error::Config("give --spec or --fixture".into())),
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    let construct_seed = seed::derive(cfg.seed, "construct");
    match cli.command {
        Command::Synth { spec, fixture, write_spec, out } => {
            let spec = task_spec(spec.as_deref(), fixture.as_deref())?;
            let written = synthlab::make_task(&spec, &out)?;
            if write_spec {
                spec.save(out.join("spec"))?;
            }
            println!(
                "{} utterances, {} posteriorgrams -> {}, {}",
                written.num_utterances,
                written.num_posteriorgrams,
                written.train_manifest.display(),
                written.test_manifest.display()
            );
        }
        Command::Featurize { manifest, out } => {
            let utts = pipeline::load_utterances(&manifest)?;
            let n = pipeline::featurize(&utts, cfg.subspace.context_order, &out)?;
            println!("{n} feature matrices -> {}", out.display());
        }
        Command::Construct { manifest, out } => {
            let utts = pipeline::load_utterances(&manifest)?;
            let report = pipeline::construct_dataset(&utts, &cfg.subspace, construct_seed)?;
            for (id, why) in &report.skipped {
                eprintln!("warning: skipped {id}: {why}");
            }
            pipeline::save_archive(&report.dataset, &cfg.subspace, &out)?;
            println!(
                "{} utterances -> {} ({} skipped)",
                report.dataset.len(),
                out.display(),
                report.skipped.len()
            );
        }
        Command::Gram { archive, out } => {
            let data = pipeline::load_archive(&archive)?;
            let grams = pipeline::write_grams(&data, &out)?;
            for (l, g) in grams.iter().enumerate() {
                println!("recognizer {l}: {0}x{0}, psd={1}", g.len(), g.is_psd());
            }
        }
        Command::TrainSvm { archive, out } => {
            let data = pipeline::load_archive(&archive)?;
            let system = pipeline::train_svm_system(&data, &cfg.svm, seed::derive(cfg.seed, "svm"))?;
            system.save(&out)?;
            for (c, e) in &system.penalty_scan {
                println!("C={c}\tdev_eer={e:.4}");
            }
            println!("selected C={} -> {}", system.penalty, out.display());
        }
        Command::TrainSnn { archive, out } => {
            let data = pipeline::load_archive(&archive)?;
            let system = pipeline::train_snn_system(&data, &cfg.snn_config())?;
            system.save(&out)?;
            if let Some(last) = system.log.last() {
                println!("epoch {} loss {:.6} -> {}", last.epoch, last.mean_loss, out.display());
            }
        }
        Command::Score { model, archive, out } => {
            let system = System::load(&model)?;
            let data = pipeline::load_archive(&archive)?;
            let trials = system.score(&data)?;
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            trials.write(&out)?;
            println!("{} trials -> {}", trials.len(), out.display());
        }
        Command::Eval { scores, out } => {
            if !scores.is_file() {
                return Err(Error::Config(format!("score file `{}` not found", scores.display())));
            }
            let trials = TrialSet::read(&scores)?;
            let m = pipeline::write_evaluation(&trials, &out)?;
            println!("eer={:.4} cavg={:.4} trials={}", m.eer, m.cavg, m.num_trials);
        }
        Command::Gradcheck => {
            let mut worst = 0.0f64;
            for s in 0..cfg.gradcheck_seeds as u64 {
                let (model, batch) = random_check_case(seed::derive(cfg.seed, &format!("gradcheck-{s}")))?;
                let refs: Vec<&SnnExample> = batch.iter().collect();
                let report = gradient_check(&model, &refs)?;
                for (name, e) in &report.tensors {
                    println!("case {s}\t{name}\t{e:.3e}");
                }
                worst = worst.max(report.max_relative_error());
            }
            println!("max relative error {worst:.3e}");
            if worst > 1e-5 {
                return Err(Error::Numerical(format!("gradient check failed: {worst:.3e} > 1e-5")));
            }
        }
        Command::Sweep { train, test, out } => {
            let tr = pipeline::load_utterances(&train)?;
            let te = pipeline::load_utterances(&test)?;
            let rows = pipeline::sweep(&tr, &te, &cfg)?;
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            pipeline::write_sweep(&rows, &out)?;
            println!("{} cells -> {}", rows.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("GRASS_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                // only fails if a pool already exists
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: GRASS_THREADS must be a positive integer, got `{v}`");
                return ExitCode::from(2);
            }
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
