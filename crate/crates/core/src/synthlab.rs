//! Synthetic phonotactic languages.
//!
//! A language is a Markov chain (order 1 or 2) over M phone units. Sampled
//! phone strings are pushed through pseudo-recognizers, each of which relabels
//! and optionally merges units into its own phone set of size M_l, and then
//! rendered as noisy posteriorgrams: row k is drawn from
//! `Dirichlet(κ·(onehot(unit_k) + ε·1))`.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix_io::{read_matrix, write_matrix, Metadata};
use crate::phonetics::{save_posteriorgram, write_manifest, ManifestEntry, PhoneticSequence};
use crate::seed;

/// Row-sum tolerance of transition tables.
pub const TABLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLanguage {
    pub name: String,
    pub num_units: usize,
    /// 1 or 2.
    pub order: usize,
    /// Rows indexed by the history: `prev` for order 1, `prev2·M + prev1`
    /// for order 2. Shape `M^order × M`.
    pub transition: Array2<f64>,
    /// Distribution of the first `order` symbols, drawn independently.
    pub initial: Array1<f64>,
}

fn check_distribution(v: impl Iterator<Item = f64>, what: &str) -> Result<()> {
    let mut sum = 0.0;
    for p in v {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(Error::Input(format!("{what} has a negative or non-finite entry")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > TABLE_TOL {
        return Err(Error::Input(format!("{what} sums to {sum}")));
    }
    Ok(())
}

impl SyntheticLanguage {
    pub fn new(
        name: impl Into<String>,
        order: usize,
        transition: Array2<f64>,
        initial: Array1<f64>,
    ) -> Result<Self> {
        let num_units = initial.len();
        let name = name.into();
        if num_units == 0 || !(1..=2).contains(&order) {
            return Err(Error::Input(format!("language `{name}`: need M >= 1 and order 1 or 2")));
        }
        if transition.dim() != (num_units.pow(order as u32), num_units) {
            return Err(Error::Dimension(format!(
                "language `{name}`: order-{order} table over {num_units} units must be {}x{num_units}, got {}x{}",
                num_units.pow(order as u32),
                transition.nrows(),
                transition.ncols()
            )));
        }
        check_distribution(initial.iter().copied(), &format!("language `{name}` initial"))?;
        for (i, row) in transition.rows().into_iter().enumerate() {
            check_distribution(row.iter().copied(), &format!("language `{name}` row {i}"))?;
        }
        Ok(SyntheticLanguage { name, num_units, order, transition, initial })
    }

    /// Every history maps to the uniform distribution.
    pub fn uniform(name: impl Into<String>, num_units: usize, order: usize) -> Result<Self> {
        let p = 1.0 / num_units as f64;
        let rows = num_units.pow(order as u32);
        Self::new(
            name,
            order,
            Array2::from_elem((rows, num_units), p),
            Array1::from_elem(num_units, p),
        )
    }

    /// Random peaked table: each row is `Dirichlet(sharpness·1)`, so small
    /// `sharpness` concentrates rows on a few successors. Uniform initial.
    pub fn random(name: impl Into<String>, num_units: usize, order: usize, sharpness: f64, seed: u64) -> Result<Self> {
        let rows = num_units.pow(order as u32);
        let mut rng = seed::rng(seed);
        let gamma = Gamma::new(sharpness, 1.0)
            .map_err(|e| Error::Input(format!("sharpness {sharpness}: {e}")))?;
        let mut table = Array2::zeros((rows, num_units));
        for mut row in table.rows_mut() {
            loop {
                row.iter_mut().for_each(|v| *v = gamma.sample(&mut rng));
                let sum = row.sum();
                if sum > 0.0 {
                    row.mapv_inplace(|v| v / sum);
                    break;
                }
            }
        }
        renormalize_rows(&mut table);
        Self::new(name, order, table, Array1::from_elem(num_units, 1.0 / num_units as f64))
    }

    /// Order-2 language with `x_k = x_{k−2} + shift (mod M)` with probability
    /// `p`, otherwise uniform. Its unigram and bigram statistics equal those
    /// of the i.i.d. uniform language; only lag-2 statistics differ.
    pub fn lag_two(name: impl Into<String>, num_units: usize, shift: usize, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Input(format!("lag-2 probability {p} outside [0, 1]")));
        }
        let m = num_units;
        let mut table = Array2::from_elem((m * m, m), (1.0 - p) / m as f64);
        for a in 0..m {
            for b in 0..m {
                table[[a * m + b, (a + shift) % m]] += p;
            }
        }
        renormalize_rows(&mut table);
        Self::new(name, 2, table, Array1::from_elem(m, 1.0 / m as f64))
    }

    fn history(&self, seq: &[usize]) -> usize {
        let k = seq.len();
        match self.order {
            1 => seq[k - 1],
            _ => seq[k - 2] * self.num_units + seq[k - 1],
        }
    }
}

/// Exact renormalization so rows pass the 1e-12 check after rounding.
fn renormalize_rows(table: &mut Array2<f64>) {
    for mut row in table.rows_mut() {
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

fn draw(probs: impl IntoIterator<Item = f64>, rng: &mut seed::Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.into_iter().enumerate() {
        if p > 0.0 {
            last = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last
}

/// K phone indices. The first `order` symbols come from the initial
/// distribution, the rest from the transition table.
pub fn sample_sequence(lang: &SyntheticLanguage, len: usize, seed: u64) -> Result<Vec<usize>> {
    if len == 0 {
        return Err(Error::Input("sequence length must be >= 1".into()));
    }
    let mut rng = seed::rng(seed);
    let mut seq = Vec::with_capacity(len);
    while seq.len() < len {
        let next = if seq.len() < lang.order {
            draw(lang.initial.iter().copied(), &mut rng)
        } else {
            draw(lang.transition.row(lang.history(&seq)).iter().copied(), &mut rng)
        };
        seq.push(next);
    }
    Ok(seq)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionConfig {
    /// Dirichlet concentration κ.
    pub concentration: f64,
    /// Floor mass ε given to every unit.
    pub floor: f64,
    /// Noiseless limit κ → ∞: rows are `(onehot + ε·1) / (1 + Mε)`.
    pub exact: bool,
}

impl Default for EmissionConfig {
    fn default() -> Self {
        EmissionConfig { concentration: 50.0, floor: 0.05, exact: false }
    }
}

impl EmissionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.concentration > 0.0) || !self.concentration.is_finite() {
            return Err(Error::Config(format!("concentration {} must be > 0", self.concentration)));
        }
        if !(self.floor >= 0.0) || !self.floor.is_finite() {
            return Err(Error::Config(format!("floor {} must be >= 0", self.floor)));
        }
        Ok(())
    }
}

/// Renders unit indices as a K×M posteriorgram.
pub fn emit_posteriors(
    sequence: &[usize],
    num_units: usize,
    cfg: &EmissionConfig,
    phoneset_id: &str,
    seed: u64,
) -> Result<PhoneticSequence> {
    cfg.validate()?;
    if let Some(&bad) = sequence.iter().find(|&&u| u >= num_units) {
        return Err(Error::Input(format!("unit {bad} outside 0..{num_units}")));
    }
    let mut out = Array2::zeros((sequence.len(), num_units));
    if cfg.exact {
        let z = 1.0 + num_units as f64 * cfg.floor;
        for (mut row, &u) in out.rows_mut().into_iter().zip(sequence) {
            row.fill(cfg.floor / z);
            row[u] = (1.0 + cfg.floor) / z;
        }
    } else {
        let mut rng = seed::rng(seed);
        let hit = Gamma::new(cfg.concentration * (1.0 + cfg.floor), 1.0)
            .map_err(|e| Error::Config(e.to_string()))?;
        let miss = if cfg.floor > 0.0 {
            Some(Gamma::new(cfg.concentration * cfg.floor, 1.0).map_err(|e| Error::Config(e.to_string()))?)
        } else {
            None
        };
        for (mut row, &u) in out.rows_mut().into_iter().zip(sequence) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if j == u {
                    hit.sample(&mut rng)
                } else {
                    miss.as_ref().map_or(0.0, |g| g.sample(&mut rng))
                };
            }
            if row[u] <= 0.0 {
                // a vanishing draw for the true unit only happens for tiny κ
                row[u] = f64::MIN_POSITIVE;
            }
            let sum = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
    }
    PhoneticSequence::new(out, phoneset_id)
}

/// Relabels the language's M units with a seeded permutation, then merges
/// them into `num_units` classes: unit j goes to `⌊π(j)·M_l / M⌋`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoRecognizer {
    pub num_units: usize,
    pub permutation_seed: u64,
}

impl PseudoRecognizer {
    pub fn unit_map(&self, language_units: usize) -> Result<Vec<usize>> {
        if self.num_units == 0 || self.num_units > language_units {
            return Err(Error::Config(format!(
                "recognizer with {} units cannot tokenize {language_units} phones",
                self.num_units
            )));
        }
        let mut perm: Vec<usize> = (0..language_units).collect();
        perm.shuffle(&mut seed::rng(self.permutation_seed));
        Ok(perm
            .into_iter()
            .map(|p| p * self.num_units / language_units)
            .collect())
    }

    pub fn phoneset_id(&self, index: usize) -> String {
        format!("rec{index}-m{}", self.num_units)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub name: String,
    pub languages: Vec<SyntheticLanguage>,
    pub train_per_language: usize,
    pub test_per_language: usize,
    pub length_min: usize,
    pub length_max: usize,
    pub recognizers: Vec<PseudoRecognizer>,
    pub emission: EmissionConfig,
    pub seed: u64,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.languages.len() < 2 {
            return Err(Error::Config("a task needs at least two languages".into()));
        }
        if self.length_min == 0 || self.length_min > self.length_max {
            return Err(Error::Config(format!(
                "length range [{}, {}] invalid",
                self.length_min, self.length_max
            )));
        }
        if self.train_per_language == 0 || self.test_per_language == 0 {
            return Err(Error::Config("utterance counts must be positive".into()));
        }
        if self.recognizers.is_empty() {
            return Err(Error::Config("a task needs at least one recognizer".into()));
        }
        let m = self.languages[0].num_units;
        let mut names: Vec<&str> = Vec::new();
        for lang in &self.languages {
            if lang.num_units != m {
                return Err(Error::Config("all languages must share one phone inventory".into()));
            }
            if lang.name.is_empty() || lang.name.contains(['\t', '\n', '=', '/']) || names.contains(&lang.name.as_str()) {
                return Err(Error::Config(format!("bad or duplicate language name `{}`", lang.name)));
            }
            names.push(&lang.name);
        }
        for r in &self.recognizers {
            r.unit_map(m)?;
        }
        self.emission.validate()
    }

    pub fn num_units(&self) -> usize {
        self.languages[0].num_units
    }

    /// Writes `<dir>/task.txt` plus one transition and one initial matrix per
    /// language.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut meta = Metadata::new()
            .with("name", &self.name)
            .with("seed", self.seed)
            .with("train_per_language", self.train_per_language)
            .with("test_per_language", self.test_per_language)
            .with("length_min", self.length_min)
            .with("length_max", self.length_max)
            .with("concentration", self.emission.concentration)
            .with("floor", self.emission.floor)
            .with("exact", self.emission.exact)
            .with("languages", self.languages.len());
        for (i, lang) in self.languages.iter().enumerate() {
            let table = format!("{}.transition.gsm", lang.name);
            let init = format!("{}.initial.gsm", lang.name);
            write_matrix(dir.join(&table), &lang.transition)?;
            write_matrix(dir.join(&init), &lang.initial.clone().insert_axis(ndarray::Axis(0)))?;
            meta.set(&format!("language.{i}.name"), &lang.name);
            meta.set(&format!("language.{i}.order"), lang.order);
            meta.set(&format!("language.{i}.transition"), table);
            meta.set(&format!("language.{i}.initial"), init);
        }
        meta.set("recognizers", self.recognizers.len());
        for (i, r) in self.recognizers.iter().enumerate() {
            meta.set(&format!("recognizer.{i}.units"), r.num_units);
            meta.set(&format!("recognizer.{i}.permutation_seed"), r.permutation_seed);
        }
        meta.write(dir.join("task.txt"))
    }

    /// Reads a spec file; table paths are relative to the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(""));
        let cfg = |e: Error| match e {
            Error::Format { path, reason } => Error::Config(format!("{}: {reason}", path.display())),
            Error::Io(e) => Error::Config(format!("{}: {e}", path.display())),
            other => other,
        };
        let meta = Metadata::read(path).map_err(cfg)?;
        let n_lang: usize = meta.require("languages", path).map_err(cfg)?;
        let mut languages = Vec::with_capacity(n_lang);
        for i in 0..n_lang {
            let name: String = meta.require(&format!("language.{i}.name"), path).map_err(cfg)?;
            let order: usize = meta.require(&format!("language.{i}.order"), path).map_err(cfg)?;
            let table: PathBuf = meta.require(&format!("language.{i}.transition"), path).map_err(cfg)?;
            let init: PathBuf = meta.require(&format!("language.{i}.initial"), path).map_err(cfg)?;
            let transition = read_matrix(base.join(table)).map_err(cfg)?;
            let initial = read_matrix(base.join(init)).map_err(cfg)?;
            if initial.nrows() != 1 {
                return Err(Error::Config(format!("language `{name}`: initial must be a single row")));
            }
            let lang = SyntheticLanguage::new(name, order, transition, initial.row(0).to_owned())
                .map_err(|e| Error::Config(e.to_string()))?;
            languages.push(lang);
        }
        let n_rec: usize = meta.require("recognizers", path).map_err(cfg)?;
        let mut recognizers = Vec::with_capacity(n_rec);
        for i in 0..n_rec {
            recognizers.push(PseudoRecognizer {
                num_units: meta.require(&format!("recognizer.{i}.units"), path).map_err(cfg)?,
                permutation_seed: meta.require(&format!("recognizer.{i}.permutation_seed"), path).map_err(cfg)?,
            });
        }
        let spec = TaskSpec {
            name: meta.require("name", path).map_err(cfg)?,
            languages,
            train_per_language: meta.require("train_per_language", path).map_err(cfg)?,
            test_per_language: meta.require("test_per_language", path).map_err(cfg)?,
            length_min: meta.require("length_min", path).map_err(cfg)?,
            length_max: meta.require("length_max", path).map_err(cfg)?,
            recognizers,
            emission: EmissionConfig {
                concentration: meta.require("concentration", path).map_err(cfg)?,
                floor: meta.require("floor", path).map_err(cfg)?,
                exact: meta.require("exact", path).map_err(cfg)?,
            },
            seed: meta.require("seed", path).map_err(cfg)?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Paths written by [`make_task`].
#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutput {
    pub train_manifest: PathBuf,
    pub test_manifest: PathBuf,
    pub num_utterances: usize,
    pub num_posteriorgrams: usize,
}

/// One generated utterance before it is written.
#[derive(Debug, Clone)]
pub struct SyntheticUtterance {
    pub utterance_id: String,
    pub language: usize,
    pub phones: Vec<usize>,
    /// One posteriorgram per pseudo-recognizer.
    pub posteriorgrams: Vec<PhoneticSequence>,
}

/// `(split, utterance id, language index)` in output order.
fn roster(spec: &TaskSpec) -> Vec<(&'static str, String, usize)> {
    let mut out = Vec::new();
    for (split, count) in [("train", spec.train_per_language), ("test", spec.test_per_language)] {
        for (li, lang) in spec.languages.iter().enumerate() {
            for i in 0..count {
                out.push((split, format!("{split}-{}-{i:04}", lang.name), li));
            }
        }
    }
    out
}

/// Generates one utterance. Every random choice derives from the global
/// seed and the utterance id, so utterances can be produced in any order.
pub fn generate_utterance(spec: &TaskSpec, utterance_id: &str, language: usize) -> Result<SyntheticUtterance> {
    let useed = seed::derive(spec.seed, utterance_id);
    let mut rng = seed::rng(seed::derive(useed, "length"));
    let len = rng.random_range(spec.length_min..=spec.length_max);
    let lang = &spec.languages[language];
    let phones = sample_sequence(lang, len, seed::derive(useed, "phones"))?;
    let mut posteriorgrams = Vec::with_capacity(spec.recognizers.len());
    for (r, rec) in spec.recognizers.iter().enumerate() {
        let map = rec.unit_map(lang.num_units)?;
        let mapped: Vec<usize> = phones.iter().map(|&u| map[u]).collect();
        posteriorgrams.push(emit_posteriors(
            &mapped,
            rec.num_units,
            &spec.emission,
            &rec.phoneset_id(r),
            seed::derive(useed, &format!("emit-{r}")),
        )?);
    }
    Ok(SyntheticUtterance {
        utterance_id: utterance_id.to_string(),
        language,
        phones,
        posteriorgrams,
    })
}

/// Generates both splits in memory: `(train, test)`, each ordered by
/// language then index.
pub fn generate_task(spec: &TaskSpec) -> Result<(Vec<SyntheticUtterance>, Vec<SyntheticUtterance>)> {
    spec.validate()?;
    let jobs = roster(spec);
    let all: Vec<SyntheticUtterance> = jobs
        .par_iter()
        .map(|(_, id, li)| generate_utterance(spec, id, *li))
        .collect::<Result<_>>()?;
    let split = spec.train_per_language * spec.languages.len();
    let mut all = all;
    let test = all.split_off(split);
    Ok((all, test))
}

/// Writes `train.lst`, `test.lst` and one posteriorgram per (utterance,
/// recognizer) under `out_dir/<split>/`.
pub fn make_task(spec: &TaskSpec, out_dir: impl AsRef<Path>) -> Result<TaskOutput> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    let jobs = roster(spec);
    // generate everything before touching the filesystem
    let utterances: Vec<SyntheticUtterance> = jobs
        .par_iter()
        .map(|(_, id, li)| generate_utterance(spec, id, *li))
        .collect::<Result<_>>()?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut files = 0;
    for ((split, id, li), utt) in jobs.iter().zip(&utterances) {
        let mut paths = Vec::with_capacity(utt.posteriorgrams.len());
        for (r, pg) in utt.posteriorgrams.iter().enumerate() {
            let rel = PathBuf::from(split).join(format!("{id}.r{r}.gsm"));
            save_posteriorgram(pg, out_dir.join(&rel))?;
            paths.push(rel);
            files += 1;
        }
        let entry = ManifestEntry {
            utterance_id: id.clone(),
            label: spec.languages[*li].name.clone(),
            paths,
        };
        if *split == "train" { train.push(entry) } else { test.push(entry) }
    }
    let train_manifest = out_dir.join("train.lst");
    let test_manifest = out_dir.join("test.lst");
    write_manifest(&train_manifest, &train)?;
    write_manifest(&test_manifest, &test)?;
    Ok(TaskOutput {
        train_manifest,
        test_manifest,
        num_utterances: utterances.len(),
        num_posteriorgrams: files,
    })
}

/// Standard fixture: three order-2 languages over ten phones with peaked,
/// seeded trigram tables, two pseudo-recognizers (10 and 8 units).
pub fn fixture_a() -> TaskSpec {
    let languages = ["alpha", "beta", "gamma"]
        .iter()
        .enumerate()
        .map(|(i, name)| {
            SyntheticLanguage::random(*name, 10, 2, 0.5, seed::derive(0xA11CE, &format!("lang-{i}")))
                .expect("valid fixture language")
        })
        .collect();
    TaskSpec {
        name: "fixture-a".into(),
        languages,
        train_per_language: 100,
        test_per_language: 50,
        length_min: 120,
        length_max: 200,
        recognizers: vec![
            PseudoRecognizer { num_units: 10, permutation_seed: 11 },
            PseudoRecognizer { num_units: 8, permutation_seed: 12 },
        ],
        emission: EmissionConfig { concentration: 5.0, floor: 0.1, exact: false },
        seed: 2024,
    }
}

/// Same shape as [`fixture_a`] but every language is the same chain, so no
/// backend should beat chance.
pub fn control_fixture() -> TaskSpec {
    let mut spec = fixture_a();
    let shared = spec.languages[0].clone();
    for lang in &mut spec.languages {
        let name = lang.name.clone();
        *lang = SyntheticLanguage { name, ..shared.clone() };
    }
    spec.name = "control".into();
    spec
}

/// Languages that agree on unigram and bigram statistics and differ only at
/// lag 2: one i.i.d. uniform language and two `x_k = x_{k−2} + s` chains.
pub fn trigram_fixture() -> TaskSpec {
    let m = 8;
    let languages = vec![
        SyntheticLanguage::uniform("iid", m, 2).expect("valid"),
        SyntheticLanguage::lag_two("lag1", m, 1, 0.6).expect("valid"),
        SyntheticLanguage::lag_two("lag3", m, 3, 0.6).expect("valid"),
    ];
    TaskSpec {
        name: "trigram".into(),
        languages,
        train_per_language: 60,
        test_per_language: 40,
        length_min: 120,
        length_max: 200,
        recognizers: vec![PseudoRecognizer { num_units: m, permutation_seed: 21 }],
        emission: EmissionConfig { concentration: 20.0, floor: 0.05, exact: false },
        seed: 77,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phonetics::{read_manifest, stack_context};
    use ndarray::array;

    #[test]
    fn deterministic_chain_follows_its_cycle() {
        let t = array![[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]];
        let lang = SyntheticLanguage::new("cyc", 1, t, array![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(sample_sequence(&lang, 7, 3).unwrap(), vec![0, 1, 2, 0, 1, 2, 0]);
        assert!(sample_sequence(&lang, 0, 3).is_err());
    }

    #[test]
    fn same_seed_same_sequence() {
        let lang = SyntheticLanguage::random("x", 5, 2, 0.5, 1).unwrap();
        assert_eq!(sample_sequence(&lang, 50, 9).unwrap(), sample_sequence(&lang, 50, 9).unwrap());
        assert_ne!(sample_sequence(&lang, 50, 9).unwrap(), sample_sequence(&lang, 50, 10).unwrap());
    }

    #[test]
    fn invalid_languages() {
        assert!(SyntheticLanguage::new("x", 1, array![[0.5, 0.6], [0.5, 0.5]], array![0.5, 0.5]).is_err());
        assert!(SyntheticLanguage::new("x", 2, array![[0.5, 0.5], [0.5, 0.5]], array![0.5, 0.5]).is_err());
        assert!(SyntheticLanguage::new("x", 3, array![[1.0]], array![1.0]).is_err());
    }

    #[test]
    fn exact_mode_is_one_hot() {
        let cfg = EmissionConfig { concentration: 1.0, floor: 0.0, exact: true };
        let seq = emit_posteriors(&[2, 0, 1], 3, &cfg, "p", 0).unwrap();
        assert_eq!(seq.posteriors(), &array![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
    }

    #[test]
    fn exact_bigram_stacking_concatenates_one_hots() {
        let cfg = EmissionConfig { concentration: 1.0, floor: 0.0, exact: true };
        let seq = emit_posteriors(&[1, 0, 2], 3, &cfg, "p", 0).unwrap();
        let z = stack_context(&seq, 2).unwrap();
        // column k holds [x_{k-1}; x_k], zero-padded before the start
        let expected = array![
            [0.0, 0.0, 1.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0]
        ];
        assert_eq!(z.data(), &expected);
    }

    #[test]
    fn noisy_rows_are_stochastic() {
        let cfg = EmissionConfig { concentration: 2.0, floor: 0.0, exact: false };
        let seq = emit_posteriors(&[0, 1, 2, 3], 4, &cfg, "p", 5).unwrap();
        for row in seq.posteriors().rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        assert!(emit_posteriors(&[4], 4, &cfg, "p", 5).is_err());
        let bad = EmissionConfig { concentration: 0.0, ..cfg };
        assert!(emit_posteriors(&[0], 4, &bad, "p", 5).is_err());
    }

    #[test]
    fn merging_recognizer_covers_its_units() {
        let rec = PseudoRecognizer { num_units: 8, permutation_seed: 3 };
        let map = rec.unit_map(10).unwrap();
        let mut seen = [false; 8];
        map.iter().for_each(|&u| seen[u] = true);
        assert!(seen.iter().all(|&s| s));
        assert!(PseudoRecognizer { num_units: 11, permutation_seed: 0 }.unit_map(10).is_err());
    }

    #[test]
    fn lag_two_rows_are_stochastic_and_bigram_uniform() {
        let lang = SyntheticLanguage::lag_two("l", 5, 2, 0.7).unwrap();
        // averaging rows over x_{k-2} gives the bigram conditional
        for b in 0..5 {
            for c in 0..5 {
                let p: f64 = (0..5).map(|a| lang.transition[[a * 5 + b, c]]).sum::<f64>() / 5.0;
                assert!((p - 0.2).abs() < 1e-12);
            }
        }
    }

    fn small_spec() -> TaskSpec {
        TaskSpec {
            name: "small".into(),
            languages: vec![
                SyntheticLanguage::random("a", 4, 1, 0.5, 1).unwrap(),
                SyntheticLanguage::random("b", 4, 1, 0.5, 2).unwrap(),
            ],
            train_per_language: 10,
            test_per_language: 10,
            length_min: 8,
            length_max: 12,
            recognizers: vec![
                PseudoRecognizer { num_units: 4, permutation_seed: 1 },
                PseudoRecognizer { num_units: 3, permutation_seed: 2 },
            ],
            emission: EmissionConfig::default(),
            seed: 5,
        }
    }

    #[test]
    fn task_counts_and_determinism() {
        let spec = small_spec();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let out = make_task(&spec, a.path()).unwrap();
        make_task(&spec, b.path()).unwrap();
        // 2 languages × 10 utterances × 2 recognizers per split
        assert_eq!(out.num_posteriorgrams, 80);
        assert_eq!(read_manifest(&out.train_manifest).unwrap().len(), 20);
        assert_eq!(read_manifest(&out.test_manifest).unwrap().len(), 20);
        for name in ["train.lst", "test.lst", "train/train-a-0003.r1.gsm", "test/test-b-0009.r0.gsm"] {
            assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
        }
    }

    #[test]
    fn spec_round_trip_and_validation() {
        let spec = small_spec();
        let dir = tempfile::tempdir().unwrap();
        spec.save(dir.path()).unwrap();
        assert_eq!(TaskSpec::load(dir.path().join("task.txt")).unwrap(), spec);
        let bad = TaskSpec { length_min: 0, ..spec.clone() };
        assert!(bad.validate().is_err());
        fs::write(dir.path().join("broken.txt"), "languages=two\n").unwrap();
        assert!(matches!(TaskSpec::load(dir.path().join("broken.txt")), Err(Error::Config(_))));
    }

    #[test]
    fn fixtures_are_valid() {
        for spec in [fixture_a(), control_fixture(), trigram_fixture()] {
            spec.validate().unwrap();
        }
        let c = control_fixture();
        assert_eq!(c.languages[0].transition, c.languages[2].transition);
    }
}
