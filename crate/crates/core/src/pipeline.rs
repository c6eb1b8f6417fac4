//! Stage glue shared by the command-line driver, the examples and the
//! end-to-end tests: datasets of per-recognizer subspaces, subspace
//! archives, the two back-ends with their model archives, scoring, metrics,
//! run configuration and grid sweeps.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{s, Array2, Axis};
use rayon::prelude::*;

use crate::construction::{construct, load_subspace, save_subspace, Method, SubspaceSpec};
use crate::error::{Error, Result};
use crate::eval::{self, stratified_kfold, Trial, TrialSet};
use crate::manifold::Subspace;
use crate::matrix_io::{read_matrix, write_matrix, Metadata};
use crate::phonetics::{
    load_posteriorgram, read_manifest, stack_context, write_manifest, ManifestEntry, PhoneticSequence,
};
use crate::seed;
use crate::snn::{self, EpochLog, SnnExample, SnnModel, SnnTrainConfig};
use crate::svm::{
    apply_fusion, compute_gram, cross_kernel, fuse_scores, ovr_scores, train_ovr, FusionModel, FusionOptions,
    GramMatrix, OvrModels, SvmModel,
};
use crate::synthlab::SyntheticUtterance;

/// An utterance as seen by every recognizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub label: String,
    /// One phonetic sequence per recognizer.
    pub sequences: Vec<PhoneticSequence>,
}

/// Converts generated utterances, labelling them with their language names.
pub fn synthetic_utterances(utts: Vec<SyntheticUtterance>, spec: &crate::synthlab::TaskSpec) -> Vec<Utterance> {
    utts.into_iter()
        .map(|u| Utterance {
            label: spec.languages[u.language].name.clone(),
            id: u.utterance_id,
            sequences: u.posteriorgrams,
        })
        .collect()
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} `{}` not found", path.display())))
    }
}

/// Loads every posteriorgram listed in a manifest.
pub fn load_utterances(manifest: impl AsRef<Path>) -> Result<Vec<Utterance>> {
    let manifest = manifest.as_ref();
    require_file(manifest, "manifest")?;
    let entries = read_manifest(manifest)?;
    entries
        .par_iter()
        .map(|e| {
            Ok(Utterance {
                id: e.utterance_id.clone(),
                label: e.label.clone(),
                sequences: e.paths.iter().map(load_posteriorgram).collect::<Result<_>>()?,
            })
        })
        .collect()
}

/// Subspaces of a set of utterances, one per recognizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub labels: Vec<String>,
    /// `subspaces[i][l]`
    pub subspaces: Vec<Vec<Subspace>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn num_recognizers(&self) -> usize {
        self.subspaces.first().map_or(0, Vec::len)
    }

    /// All subspaces of recognizer l, in utterance order.
    pub fn channel(&self, l: usize) -> Vec<&Subspace> {
        self.subspaces.iter().map(|s| &s[l]).collect()
    }

    /// Sorted distinct labels.
    pub fn label_set(&self) -> Vec<String> {
        self.labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i].clone()).collect(),
            subspaces: idx.iter().map(|&i| self.subspaces[i].clone()).collect(),
        }
    }

    fn target_indices(&self, targets: &[String]) -> Result<Vec<usize>> {
        self.labels
            .iter()
            .map(|l| {
                targets
                    .iter()
                    .position(|t| t == l)
                    .ok_or_else(|| Error::Input(format!("label `{l}` is not a known target")))
            })
            .collect()
    }
}

/// Result of subspace construction; failed utterances are skipped.
#[derive(Debug, Clone)]
pub struct ConstructReport {
    pub dataset: Dataset,
    /// `(utterance id, reason)` of every skipped utterance.
    pub skipped: Vec<(String, String)>,
}

/// Builds one subspace per (utterance, recognizer). ODL seeds derive from
/// `seed` and the utterance id.
pub fn construct_dataset(utts: &[Utterance], spec: &SubspaceSpec, seed: u64) -> Result<ConstructReport> {
    spec.validate()?;
    let results: Vec<Result<Vec<Subspace>>> = utts
        .par_iter()
        .map(|u| {
            u.sequences
                .iter()
                .enumerate()
                .map(|(l, seq)| construct(seq, spec, seed::derive(seed, &format!("{}/r{l}", u.id))))
                .collect()
        })
        .collect();
    let mut dataset = Dataset { ids: Vec::new(), labels: Vec::new(), subspaces: Vec::new() };
    let mut skipped = Vec::new();
    for (u, r) in utts.iter().zip(results) {
        match r {
            Ok(subs) => {
                dataset.ids.push(u.id.clone());
                dataset.labels.push(u.label.clone());
                dataset.subspaces.push(subs);
            }
            Err(e) => skipped.push((u.id.clone(), e.to_string())),
        }
    }
    if dataset.is_empty() && !utts.is_empty() {
        return Err(Error::Numerical(format!(
            "every utterance failed; first error: {}",
            skipped[0].1
        )));
    }
    Ok(ConstructReport { dataset, skipped })
}

const ARCHIVE_INDEX: &str = "archive.lst";

/// Writes `archive.lst` (manifest format) and `subspaces/<id>.r<l>.gsm`
/// with sidecars.
pub fn save_archive(dataset: &Dataset, spec: &SubspaceSpec, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("subspaces"))?;
    let mut entries = Vec::with_capacity(dataset.len());
    for i in 0..dataset.len() {
        let mut paths = Vec::new();
        for (l, s) in dataset.subspaces[i].iter().enumerate() {
            let rel = PathBuf::from("subspaces").join(format!("{}.r{l}.gsm", dataset.ids[i]));
            save_subspace(dir.join(&rel), s, spec)?;
            paths.push(rel);
        }
        entries.push(ManifestEntry {
            utterance_id: dataset.ids[i].clone(),
            label: dataset.labels[i].clone(),
            paths,
        });
    }
    write_manifest(dir.join(ARCHIVE_INDEX), &entries)
}

pub fn load_archive(dir: impl AsRef<Path>) -> Result<Dataset> {
    let index = dir.as_ref().join(ARCHIVE_INDEX);
    require_file(&index, "subspace archive index")?;
    let entries = read_manifest(&index)?;
    let subspaces = entries
        .par_iter()
        .map(|e| e.paths.iter().map(|p| load_subspace(p).map(|(s, _)| s)).collect())
        .collect::<Result<Vec<Vec<Subspace>>>>()?;
    Ok(Dataset {
        ids: entries.iter().map(|e| e.utterance_id.clone()).collect(),
        labels: entries.iter().map(|e| e.label.clone()).collect(),
        subspaces,
    })
}

/// Writes the context-stacked matrix of every (utterance, recognizer) plus
/// `features.lst`.
pub fn featurize(utts: &[Utterance], context_order: usize, dir: impl AsRef<Path>) -> Result<usize> {
    let dir = dir.as_ref();
    let stacked: Vec<Vec<Array2<f64>>> = utts
        .par_iter()
        .map(|u| {
            u.sequences
                .iter()
                .map(|s| stack_context(s, context_order).map(|z| z.data().clone()))
                .collect()
        })
        .collect::<Result<_>>()?;
    fs::create_dir_all(dir.join("features"))?;
    let mut entries = Vec::new();
    let mut count = 0;
    for (u, mats) in utts.iter().zip(&stacked) {
        let mut paths = Vec::new();
        for (l, z) in mats.iter().enumerate() {
            let rel = PathBuf::from("features").join(format!("{}.r{l}.gsm", u.id));
            write_matrix(dir.join(&rel), z)?;
            paths.push(rel);
            count += 1;
        }
        entries.push(ManifestEntry { utterance_id: u.id.clone(), label: u.label.clone(), paths });
    }
    write_manifest(dir.join("features.lst"), &entries)?;
    Ok(count)
}

/// Gram matrix of each recognizer channel.
pub fn dataset_grams(data: &Dataset) -> Result<Vec<GramMatrix>> {
    (0..data.num_recognizers())
        .map(|l| compute_gram(&data.channel(l), data.ids.clone()))
        .collect()
}

/// Writes `gram.r<l>.gsm` per recognizer and the row ids in `gram.ids`.
pub fn write_grams(data: &Dataset, dir: impl AsRef<Path>) -> Result<Vec<GramMatrix>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let grams = dataset_grams(data)?;
    for (l, g) in grams.iter().enumerate() {
        write_matrix(dir.join(format!("gram.r{l}.gsm")), g.values())?;
    }
    fs::write(dir.join("gram.ids"), data.ids.join("\n") + "\n")?;
    Ok(grams)
}

/// Per-utterance, per-target scores as trials.
pub fn trials_from_scores(data: &Dataset, targets: &[String], scores: &Array2<f64>) -> Result<TrialSet> {
    if scores.dim() != (data.len(), targets.len()) {
        return Err(Error::Dimension(format!(
            "score matrix {:?} for {} utterances and {} targets",
            scores.dim(),
            data.len(),
            targets.len()
        )));
    }
    let mut trials = Vec::with_capacity(scores.len());
    for (i, row) in scores.rows().into_iter().enumerate() {
        for (t, target) in targets.iter().enumerate() {
            trials.push(Trial {
                utterance_id: data.ids[i].clone(),
                target_label: target.clone(),
                score: row[t],
                is_target: data.labels[i] == *target,
            });
        }
    }
    TrialSet::new(trials)
}

/// Projection-kernel SVM back-end settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmConfig {
    /// Candidate penalties C; with more than one, C is picked on a held-out
    /// development fold.
    pub penalties: Vec<f64>,
    /// The development fold is one of this many stratified folds.
    pub dev_folds: usize,
    pub fusion: FusionOptions,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig { penalties: vec![0.1, 1.0, 10.0], dev_folds: 5, fusion: FusionOptions::default() }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.penalties.is_empty() || self.penalties.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return Err(Error::Config("SVM penalties must be positive".into()));
        }
        if self.dev_folds < 2 {
            return Err(Error::Config("dev_folds must be >= 2".into()));
        }
        if !(self.fusion.reg_strength >= 0.0) || !(self.fusion.gradient_tol > 0.0) {
            return Err(Error::Config("invalid fusion options".into()));
        }
        Ok(())
    }
}

/// One-vs-rest SVMs on the fit split, fused by logistic regression trained
/// on the development split.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmSystem {
    pub targets: Vec<String>,
    pub penalty: f64,
    pub ovr: OvrModels,
    pub fusion: FusionModel,
    /// Subspaces the SVMs were trained on (`fit.subspaces[i][l]`).
    pub fit: Dataset,
    /// Development EER of each candidate penalty.
    pub penalty_scan: Vec<(f64, f64)>,
}

/// Raw score columns averaged over recognizers: N×T.
fn recognizer_average(raw: &Array2<f64>, targets: usize) -> Array2<f64> {
    let recognizers = raw.ncols() / targets;
    let mut out = Array2::zeros((raw.nrows(), targets));
    for l in 0..recognizers {
        out += &raw.slice(s![.., l * targets..(l + 1) * targets]);
    }
    out / recognizers as f64
}

fn select_kernel(gram: &GramMatrix, rows: &[usize], cols: &[usize]) -> Array2<f64> {
    let v = gram.values();
    Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| v[[rows[i], cols[j]]])
}

pub fn train_svm_system(train: &Dataset, cfg: &SvmConfig, seed: u64) -> Result<SvmSystem> {
    cfg.validate()?;
    let targets = train.label_set();
    if targets.len() < 2 {
        return Err(Error::Input("training set needs at least two labels".into()));
    }
    let labels = train.target_indices(&targets)?;
    let folds = stratified_kfold(&labels, cfg.dev_folds, seed::derive(seed, "svm-dev"))?;
    let (fit_idx, dev_idx) = (&folds[0].train, &folds[0].test);
    let grams = dataset_grams(train)?;
    let fit_grams: Vec<GramMatrix> = grams.iter().map(|g| g.select(fit_idx)).collect();
    let dev_cross: Vec<Array2<f64>> = grams.iter().map(|g| select_kernel(g, dev_idx, fit_idx)).collect();
    let fit_labels: Vec<usize> = fit_idx.iter().map(|&i| labels[i]).collect();
    let dev_labels: Vec<usize> = dev_idx.iter().map(|&i| labels[i]).collect();
    let dev = train.subset(dev_idx);
    let mut best: Option<(f64, f64, OvrModels, Array2<f64>)> = None;
    let mut penalty_scan = Vec::with_capacity(cfg.penalties.len());
    for &c in &cfg.penalties {
        let ovr = train_ovr(&fit_grams, &fit_labels, targets.len(), c)?;
        let raw = ovr_scores(&ovr, &dev_cross)?;
        let dev_eer = eval::eer(&trials_from_scores(&dev, &targets, &recognizer_average(&raw, targets.len()))?)?;
        penalty_scan.push((c, dev_eer));
        // first minimum wins
        if best.as_ref().is_none_or(|b| dev_eer < b.1) {
            best = Some((c, dev_eer, ovr, raw));
        }
    }
    let (penalty, _, ovr, dev_raw) = best.expect("at least one penalty");
    let fusion = fuse_scores(&dev_raw.view(), &dev_labels, &cfg.fusion)?;
    Ok(SvmSystem { targets, penalty, ovr, fusion, fit: train.subset(fit_idx), penalty_scan })
}

impl SvmSystem {
    /// Raw one-vs-rest scores, column `l·T + t`.
    pub fn raw_scores(&self, data: &Dataset) -> Result<Array2<f64>> {
        let cross: Vec<Array2<f64>> = (0..self.ovr.num_recognizers())
            .map(|l| cross_kernel(&data.channel(l), &self.fit.channel(l)))
            .collect::<Result<_>>()?;
        ovr_scores(&self.ovr, &cross)
    }

    /// Fused per-target log-posteriors, N×T.
    pub fn log_posteriors(&self, data: &Dataset) -> Result<Array2<f64>> {
        if data.num_recognizers() != self.ovr.num_recognizers() {
            return Err(Error::Dimension(format!(
                "model expects {} recognizers, data has {}",
                self.ovr.num_recognizers(),
                data.num_recognizers()
            )));
        }
        apply_fusion(&self.fusion, &self.raw_scores(data)?.view())
    }

    pub fn score(&self, data: &Dataset) -> Result<TrialSet> {
        trials_from_scores(data, &self.targets, &self.log_posteriors(data)?)
    }

    /// Model archive: one `svm_<l>_<t>.gsm` record per binary model (row 0
    /// signed dual coefficients, row 1 support indices), `fusion.gsm`, the
    /// fit subspaces of each recognizer side by side in `fit_<l>.gsm`, and
    /// `index.txt`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut index = Metadata::new()
            .with("kind", "svm")
            .with("recognizers", self.ovr.num_recognizers())
            .with("targets", self.targets.len())
            .with("penalty", self.penalty)
            .with("fusion_reg", self.fusion.reg_strength)
            .with("fusion_gradient_norm", self.fusion.gradient_norm)
            .with("fit_size", self.fit.len());
        for (t, name) in self.targets.iter().enumerate() {
            index.set(&format!("target.{t}"), name);
        }
        for (c, e) in &self.penalty_scan {
            index.set(&format!("dev_eer.{c}"), e);
        }
        for (l, per_target) in self.ovr.models.iter().enumerate() {
            for (t, m) in per_target.iter().enumerate() {
                let n = m.dual_coefs.len();
                let mut rec = Array2::zeros((2, n));
                for k in 0..n {
                    rec[[0, k]] = m.dual_coefs[k];
                    rec[[1, k]] = m.support_ids[k] as f64;
                }
                write_matrix(dir.join(format!("svm_{l}_{t}.gsm")), &rec)?;
                index.set(&format!("svm.{l}.{t}.bias"), m.bias);
                index.set(&format!("svm.{l}.{t}.C"), m.penalty);
                index.set(&format!("svm.{l}.{t}.num_train"), m.num_train);
            }
            let views: Vec<_> = self.fit.channel(l).iter().map(|s| s.basis().view()).collect();
            let block = ndarray::concatenate(Axis(1), &views).map_err(|e| Error::Dimension(e.to_string()))?;
            write_matrix(dir.join(format!("fit_{l}.gsm")), &block)?;
            index.set(&format!("fit.{l}.rank"), self.fit.subspaces[0][l].rank());
        }
        write_matrix(dir.join("fusion.gsm"), &self.fusion.weights)?;
        let mut ids = String::new();
        for (id, label) in self.fit.ids.iter().zip(&self.fit.labels) {
            ids.push_str(&format!("{id}\t{label}\n"));
        }
        fs::write(dir.join("fit_ids.txt"), ids)?;
        index.write(dir.join("index.txt"))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("index.txt");
        let index = Metadata::read(&path)?;
        if index.get("kind") != Some("svm") {
            return Err(Error::format(&path, "not an SVM model archive"));
        }
        let recognizers: usize = index.require("recognizers", &path)?;
        let num_targets: usize = index.require("targets", &path)?;
        let targets: Vec<String> = (0..num_targets)
            .map(|t| index.require(&format!("target.{t}"), &path))
            .collect::<Result<_>>()?;
        let id_text = fs::read_to_string(dir.join("fit_ids.txt"))?;
        let (mut ids, mut labels) = (Vec::new(), Vec::new());
        for line in id_text.lines() {
            let (id, label) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(dir.join("fit_ids.txt"), "expected id<TAB>label"))?;
            ids.push(id.to_string());
            labels.push(label.to_string());
        }
        let mut subspaces: Vec<Vec<Subspace>> = vec![Vec::with_capacity(recognizers); ids.len()];
        let mut models = Vec::with_capacity(recognizers);
        for l in 0..recognizers {
            let rank: usize = index.require(&format!("fit.{l}.rank"), &path)?;
            let block = read_matrix(dir.join(format!("fit_{l}.gsm")))?;
            if rank == 0 || block.ncols() != rank * ids.len() {
                return Err(Error::format(&path, format!("fit block {l} has the wrong width")));
            }
            for (i, subs) in subspaces.iter_mut().enumerate() {
                subs.push(Subspace::new(block.slice(s![.., i * rank..(i + 1) * rank]).to_owned(), format!("fit-{l}"))?);
            }
            let mut per_target = Vec::with_capacity(num_targets);
            for t in 0..num_targets {
                let rec = read_matrix(dir.join(format!("svm_{l}_{t}.gsm")))?;
                if rec.nrows() != 2 {
                    return Err(Error::format(&path, format!("SVM record ({l}, {t}) must have two rows")));
                }
                let num_train: usize = index.require(&format!("svm.{l}.{t}.num_train"), &path)?;
                let support_ids: Vec<usize> = rec.row(1).iter().map(|&v| v as usize).collect();
                if support_ids.iter().any(|&i| i >= num_train) || num_train != ids.len() {
                    return Err(Error::format(&path, format!("SVM record ({l}, {t}) support ids out of range")));
                }
                per_target.push(SvmModel {
                    dual_coefs: rec.row(0).to_vec(),
                    support_ids,
                    bias: index.require(&format!("svm.{l}.{t}.bias"), &path)?,
                    penalty: index.require(&format!("svm.{l}.{t}.C"), &path)?,
                    num_train,
                });
            }
            models.push(per_target);
        }
        let weights = read_matrix(dir.join("fusion.gsm"))?;
        if weights.dim() != (recognizers * num_targets + 1, num_targets) {
            return Err(Error::format(&path, "fusion weights have the wrong shape"));
        }
        let penalty_scan = index
            .entries()
            .filter_map(|(k, v)| Some((k.strip_prefix("dev_eer.")?.parse().ok()?, v.parse().ok()?)))
            .collect();
        Ok(SvmSystem {
            targets,
            penalty: index.require("penalty", &path)?,
            ovr: OvrModels { models, num_targets },
            fusion: FusionModel {
                weights,
                reg_strength: index.require("fusion_reg", &path)?,
                gradient_norm: index.require("fusion_gradient_norm", &path)?,
            },
            fit: Dataset { ids, labels, subspaces },
            penalty_scan,
        })
    }
}

/// Subspace neural network back-end.
#[derive(Debug, Clone)]
pub struct SnnSystem {
    pub targets: Vec<String>,
    pub model: SnnModel,
    pub config: SnnTrainConfig,
    pub log: Vec<EpochLog>,
}

fn snn_examples(data: &Dataset, targets: &[String]) -> Result<Vec<SnnExample>> {
    let labels = data.target_indices(targets)?;
    Ok(data
        .subspaces
        .iter()
        .zip(labels)
        .map(|(inputs, label)| SnnExample { inputs: inputs.clone(), label })
        .collect())
}

pub fn train_snn_system(train: &Dataset, cfg: &SnnTrainConfig) -> Result<SnnSystem> {
    let targets = train.label_set();
    if targets.len() < 2 {
        return Err(Error::Input("training set needs at least two labels".into()));
    }
    let examples = snn_examples(train, &targets)?;
    let outcome = snn::train(&examples, cfg)?;
    Ok(SnnSystem { targets, model: outcome.model, config: cfg.clone(), log: outcome.log })
}

impl SnnSystem {
    pub fn log_posteriors(&self, data: &Dataset) -> Result<Array2<f64>> {
        let rows: Vec<_> = data
            .subspaces
            .par_iter()
            .map(|inputs| snn::detection_scores(&self.model, inputs))
            .collect::<Result<_>>()?;
        let mut out = Array2::zeros((data.len(), self.targets.len()));
        for (i, r) in rows.iter().enumerate() {
            out.row_mut(i).assign(r);
        }
        Ok(out)
    }

    pub fn score(&self, data: &Dataset) -> Result<TrialSet> {
        trials_from_scores(data, &self.targets, &self.log_posteriors(data)?)
    }

    /// Model archive plus `train.log` (one line per epoch; the wall-time
    /// column makes it the only non-reproducible file).
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let c = &self.config;
        let mut extra = Metadata::new()
            .with("beta", c.beta)
            .with("seed", c.seed)
            .with("epochs", self.log.len())
            .with("batch_size", c.batch_size)
            .with("learning_rate", c.learning_rate)
            .with("lr_halving_period", c.lr_halving_period)
            .with("targets", self.targets.len());
        for (t, name) in self.targets.iter().enumerate() {
            extra.set(&format!("target.{t}"), name);
        }
        self.model.save(dir, &extra)?;
        let mut log = String::from("# epoch\tlr\tmean_loss\tpenalty\tseconds\n");
        for e in &self.log {
            log.push_str(&e.to_line());
            log.push('\n');
        }
        fs::write(dir.join("train.log"), log)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("index.txt");
        let (model, index) = SnnModel::load(dir)?;
        let n: usize = index.require("targets", &path)?;
        let targets: Vec<String> = (0..n)
            .map(|t| index.require(&format!("target.{t}"), &path))
            .collect::<Result<_>>()?;
        if n != model.num_targets() {
            return Err(Error::format(&path, "target list does not match the output layer"));
        }
        let config = SnnTrainConfig {
            learning_rate: index.require("learning_rate", &path)?,
            lr_halving_period: index.require("lr_halving_period", &path)?,
            batch_size: index.require("batch_size", &path)?,
            max_epochs: index.require("epochs", &path)?,
            lambda_orth: model.lambda_orth,
            m: model.maps_per_input(),
            beta: index.require("beta", &path)?,
            hidden: model.head()[..model.head().len() - 1].iter().map(|d| d.bias.len()).collect(),
            seed: index.require("seed", &path)?,
            ..SnnTrainConfig::default()
        };
        Ok(SnnSystem { targets, model, config, log: Vec::new() })
    }
}

/// A trained back-end of either kind.
#[derive(Debug, Clone)]
pub enum System {
    Svm(SvmSystem),
    Snn(SnnSystem),
}

impl System {
    pub fn score(&self, data: &Dataset) -> Result<TrialSet> {
        match self {
            System::Svm(s) => s.score(data),
            System::Snn(s) => s.score(data),
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        match self {
            System::Svm(s) => s.save(dir),
            System::Snn(s) => s.save(dir),
        }
    }

    /// Loads either kind, dispatching on the archive index.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let index = dir.join("index.txt");
        require_file(&index, "model archive index")?;
        match Metadata::read(&index)?.get("kind") {
            Some("svm") => SvmSystem::load(dir).map(System::Svm),
            Some("snn") => SnnSystem::load(dir).map(System::Snn),
            _ => Err(Error::format(&index, "unknown model kind")),
        }
    }
}

/// Detection metrics of one trial set.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// EER over trials pooled across targets.
    pub eer: f64,
    pub eer_target_averaged: f64,
    pub cavg: f64,
    pub per_target: Vec<(String, f64)>,
    pub num_trials: usize,
}

pub fn evaluate(trials: &TrialSet) -> Result<Metrics> {
    Ok(Metrics {
        eer: eval::eer(trials)?,
        eer_target_averaged: eval::eer_target_averaged(trials)?,
        cavg: eval::avg_cost(trials)?,
        per_target: eval::eer_per_target(trials)?,
        num_trials: trials.len(),
    })
}

impl Metrics {
    pub fn to_text(&self) -> String {
        let mut meta = Metadata::new()
            .with("trials", self.num_trials)
            .with("eer", self.eer)
            .with("eer_target_averaged", self.eer_target_averaged)
            .with("cavg", self.cavg);
        for (t, e) in &self.per_target {
            meta.set(&format!("eer.{t}"), e);
        }
        meta.to_text()
    }
}

/// Writes `metrics.txt` and `det.txt` under `dir`.
pub fn write_evaluation(trials: &TrialSet, dir: impl AsRef<Path>) -> Result<Metrics> {
    let dir = dir.as_ref();
    let metrics = evaluate(trials)?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("metrics.txt"), metrics.to_text())?;
    eval::write_det(dir.join("det.txt"), &eval::det_points(trials)?)?;
    Ok(metrics)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Svm,
    Snn,
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svm" => Ok(Backend::Svm),
            "snn" => Ok(Backend::Snn),
            other => Err(Error::Config(format!("unknown backend `{other}`"))),
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Svm => "svm",
            Backend::Snn => "snn",
        })
    }
}

/// Grid for [`sweep`]; an empty axis means "the configured value".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepGrid {
    pub context_orders: Vec<usize>,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub ms: Vec<usize>,
    pub lambdas: Vec<f64>,
}

/// Every stage parameter, read from a `key=value` file and overridden by
/// `key=value` pairs from the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub subspace: SubspaceSpec,
    pub backend: Backend,
    pub svm: SvmConfig,
    pub snn: SnnTrainConfig,
    pub sweep: SweepGrid,
    pub gradcheck_seeds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            subspace: SubspaceSpec::new(Method::Olr, 3, 0.6),
            backend: Backend::Svm,
            svm: SvmConfig::default(),
            snn: SnnTrainConfig::default(),
            sweep: SweepGrid::default(),
            gradcheck_seeds: 10,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value for `{key}`: `{value}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v)).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub const KEYS: &'static [&'static str] = &[
        "seed",
        "method",
        "n",
        "alpha",
        "lambda_odl",
        "odl_iterations",
        "backend",
        "svm.penalties",
        "svm.dev_folds",
        "fusion.reg",
        "fusion.tol",
        "snn.m",
        "snn.beta",
        "snn.lambda_orth",
        "snn.epochs",
        "snn.batch_size",
        "snn.learning_rate",
        "snn.halving_period",
        "snn.hidden",
        "sweep.n",
        "sweep.alpha",
        "sweep.beta",
        "sweep.m",
        "sweep.lambda_orth",
        "gradcheck.seeds",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "method" => self.subspace.method = value.trim().parse()?,
            "n" => self.subspace.context_order = parse(key, value)?,
            "alpha" => self.subspace.sample_ratio = parse(key, value)?,
            "lambda_odl" => self.subspace.odl.lambda_odl = parse(key, value)?,
            "odl_iterations" => self.subspace.odl.iterations = parse(key, value)?,
            "backend" => self.backend = value.trim().parse()?,
            "svm.penalties" => self.svm.penalties = parse_list(key, value)?,
            "svm.dev_folds" => self.svm.dev_folds = parse(key, value)?,
            "fusion.reg" => self.svm.fusion.reg_strength = parse(key, value)?,
            "fusion.tol" => self.svm.fusion.gradient_tol = parse(key, value)?,
            "snn.m" => self.snn.m = parse(key, value)?,
            "snn.beta" => self.snn.beta = parse(key, value)?,
            "snn.lambda_orth" => self.snn.lambda_orth = parse(key, value)?,
            "snn.epochs" => self.snn.max_epochs = parse(key, value)?,
            "snn.batch_size" => self.snn.batch_size = parse(key, value)?,
            "snn.learning_rate" => self.snn.learning_rate = parse(key, value)?,
            "snn.halving_period" => self.snn.lr_halving_period = parse(key, value)?,
            "snn.hidden" => self.snn.hidden = parse_list(key, value)?,
            "sweep.n" => self.sweep.context_orders = parse_list(key, value)?,
            "sweep.alpha" => self.sweep.alphas = parse_list(key, value)?,
            "sweep.beta" => self.sweep.betas = parse_list(key, value)?,
            "sweep.m" => self.sweep.ms = parse_list(key, value)?,
            "sweep.lambda_orth" => self.sweep.lambdas = parse_list(key, value)?,
            "gradcheck.seeds" => self.gradcheck_seeds = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key=value` strings in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, pairs: &[S]) -> Result<()> {
        for p in pairs {
            let (k, v) = p
                .as_ref()
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{}` is not key=value", p.as_ref())))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        require_file(path, "config file")?;
        let meta = Metadata::read(path).map_err(|e| Error::Config(e.to_string()))?;
        let mut cfg = RunConfig::default();
        for (k, v) in meta.entries() {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// SNN settings with the stage seed filled in.
    pub fn snn_config(&self) -> SnnTrainConfig {
        SnnTrainConfig { seed: seed::derive(self.seed, "snn"), ..self.snn.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.subspace.validate()?;
        self.svm.validate()?;
        self.snn.validate()?;
        let mut probe = self.clone();
        for &n in &self.sweep.context_orders {
            probe.subspace.context_order = n;
            probe.subspace.validate()?;
        }
        for &a in &self.sweep.alphas {
            probe.subspace.sample_ratio = a;
            probe.subspace.validate()?;
        }
        for &b in &self.sweep.betas {
            SnnTrainConfig { beta: b, ..self.snn.clone() }.validate()?;
        }
        for &m in &self.sweep.ms {
            SnnTrainConfig { m, ..self.snn.clone() }.validate()?;
        }
        for &l in &self.sweep.lambdas {
            SnnTrainConfig { lambda_orth: l, ..self.snn.clone() }.validate()?;
        }
        if self.gradcheck_seeds == 0 {
            return Err(Error::Config("gradcheck.seeds must be >= 1".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let s = &self.subspace;
        let n = &self.snn;
        Metadata::new()
            .with("seed", self.seed)
            .with("method", s.method)
            .with("n", s.context_order)
            .with("alpha", s.sample_ratio)
            .with("lambda_odl", s.odl.lambda_odl)
            .with("odl_iterations", s.odl.iterations)
            .with("backend", self.backend)
            .with("svm.penalties", join(&self.svm.penalties))
            .with("svm.dev_folds", self.svm.dev_folds)
            .with("fusion.reg", self.svm.fusion.reg_strength)
            .with("fusion.tol", self.svm.fusion.gradient_tol)
            .with("snn.m", n.m)
            .with("snn.beta", n.beta)
            .with("snn.lambda_orth", n.lambda_orth)
            .with("snn.epochs", n.max_epochs)
            .with("snn.batch_size", n.batch_size)
            .with("snn.learning_rate", n.learning_rate)
            .with("snn.halving_period", n.lr_halving_period)
            .with("snn.hidden", join(&n.hidden))
            .with("sweep.n", join(&self.sweep.context_orders))
            .with("sweep.alpha", join(&self.sweep.alphas))
            .with("sweep.beta", join(&self.sweep.betas))
            .with("sweep.m", join(&self.sweep.ms))
            .with("sweep.lambda_orth", join(&self.sweep.lambdas))
            .with("gradcheck.seeds", self.gradcheck_seeds)
            .to_text()
    }
}

/// Trains the configured back-end.
pub fn train_system(train: &Dataset, cfg: &RunConfig) -> Result<System> {
    match cfg.backend {
        Backend::Svm => train_svm_system(train, &cfg.svm, seed::derive(cfg.seed, "svm")).map(System::Svm),
        Backend::Snn => train_snn_system(train, &cfg.snn_config()).map(System::Snn),
    }
}

/// Constructs, trains, scores and evaluates in memory.
pub fn run_experiment(train: &[Utterance], test: &[Utterance], cfg: &RunConfig) -> Result<Metrics> {
    cfg.validate()?;
    let seed = seed::derive(cfg.seed, "construct");
    let tr = construct_dataset(train, &cfg.subspace, seed)?.dataset;
    let te = construct_dataset(test, &cfg.subspace, seed)?.dataset;
    evaluate(&train_system(&tr, cfg)?.score(&te)?)
}

/// One cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub context_order: usize,
    pub alpha: f64,
    pub beta: f64,
    pub m: usize,
    pub lambda_orth: f64,
    pub eer: f64,
}

impl SweepRow {
    pub fn to_line(&self) -> String {
        format!(
            "n={}\talpha={}\tbeta={}\tm={}\tlambda_orth={}\teer={:.6}",
            self.context_order, self.alpha, self.beta, self.m, self.lambda_orth, self.eer
        )
    }
}

fn axis<T: Copy>(values: &[T], current: T) -> Vec<T> {
    if values.is_empty() { vec![current] } else { values.to_vec() }
}

/// Exhaustive grid over (n, α, β, m, λ). Subspaces are built once per
/// (n, α); the SVM back-end ignores the SNN axes and is trained once per
/// (n, α).
pub fn sweep(train: &[Utterance], test: &[Utterance], cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let g = &cfg.sweep;
    let mut rows = Vec::new();
    let construct_seed = seed::derive(cfg.seed, "construct");
    for n in axis(&g.context_orders, cfg.subspace.context_order) {
        for alpha in axis(&g.alphas, cfg.subspace.sample_ratio) {
            let spec = SubspaceSpec { context_order: n, sample_ratio: alpha, ..cfg.subspace };
            let tr = construct_dataset(train, &spec, construct_seed)?.dataset;
            let te = construct_dataset(test, &spec, construct_seed)?.dataset;
            let mut svm_eer = None;
            for beta in axis(&g.betas, cfg.snn.beta) {
                for m in axis(&g.ms, cfg.snn.m) {
                    for lambda_orth in axis(&g.lambdas, cfg.snn.lambda_orth) {
                        let mut cell = cfg.clone();
                        cell.subspace = spec;
                        cell.snn.beta = beta;
                        cell.snn.m = m;
                        cell.snn.lambda_orth = lambda_orth;
                        let eer = match (cfg.backend, svm_eer) {
                            (Backend::Svm, Some(e)) => e,
                            _ => {
                                let e = evaluate(&train_system(&tr, &cell)?.score(&te)?)?.eer;
                                if cfg.backend == Backend::Svm {
                                    svm_eer = Some(e);
                                }
                                e
                            }
                        };
                        rows.push(SweepRow { context_order: n, alpha, beta, m, lambda_orth, eer });
                    }
                }
            }
        }
    }
    Ok(rows)
}

pub fn write_sweep(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let text: String = rows.iter().map(|r| r.to_line() + "\n").collect();
    fs::write(path, text)?;
    Ok(())
}
