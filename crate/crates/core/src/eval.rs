//! Detection metrics and the cross-validation protocol.
//!
//! A trial accepts when `score >= threshold`. Sweeping the threshold over the
//! sorted distinct scores (plus +∞) gives the operating points of the DET
//! curve, running from (FAR, FRR) = (1, 0) to (0, 1).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub utterance_id: String,
    /// Hypothesized target.
    pub target_label: String,
    pub score: f64,
    pub is_target: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialSet {
    trials: Vec<Trial>,
}

impl TrialSet {
    pub fn new(trials: Vec<Trial>) -> Result<Self> {
        if let Some(t) = trials.iter().find(|t| !t.score.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite score for {} / {}",
                t.utterance_id, t.target_label
            )));
        }
        Ok(TrialSet { trials })
    }

    /// Trials from bare scores and labels (ids left empty).
    pub fn from_scores(scores: &[f64], is_target: &[bool]) -> Result<Self> {
        if scores.len() != is_target.len() {
            return Err(Error::Dimension("scores and labels differ in length".into()));
        }
        TrialSet::new(
            scores
                .iter()
                .zip(is_target)
                .enumerate()
                .map(|(i, (&score, &is_target))| Trial {
                    utterance_id: i.to_string(),
                    target_label: String::new(),
                    score,
                    is_target,
                })
                .collect(),
        )
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn push(&mut self, trial: Trial) -> Result<()> {
        if !trial.score.is_finite() {
            return Err(Error::Input("non-finite score".into()));
        }
        self.trials.push(trial);
        Ok(())
    }

    /// Trials grouped by hypothesized target, in label order.
    pub fn by_target(&self) -> BTreeMap<&str, Vec<&Trial>> {
        let mut groups: BTreeMap<&str, Vec<&Trial>> = BTreeMap::new();
        for t in &self.trials {
            groups.entry(t.target_label.as_str()).or_default().push(t);
        }
        groups
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = String::new();
        for t in &self.trials {
            writeln!(
                text,
                "{}\t{}\t{}\t{}",
                t.utterance_id,
                t.target_label,
                t.score,
                if t.is_target { "target" } else { "nontarget" }
            )
            .unwrap();
        }
        fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let mut trials = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let bad = |why: &str| Error::format(path, format!("line {}: {why}", lineno + 1));
            if f.len() != 4 {
                return Err(bad("expected 4 tab-separated fields"));
            }
            let score = f[2].parse::<f64>().map_err(|_| bad("unparsable score"))?;
            let is_target = match f[3] {
                "target" => true,
                "nontarget" => false,
                _ => return Err(bad("kind must be target or nontarget")),
            };
            trials.push(Trial {
                utterance_id: f[0].to_string(),
                target_label: f[1].to_string(),
                score,
                is_target,
            });
        }
        TrialSet::new(trials)
    }
}

fn operating_points(trials: &[&Trial]) -> Result<Vec<(f64, f64)>> {
    let n_tar = trials.iter().filter(|t| t.is_target).count();
    let n_non = trials.len() - n_tar;
    if n_tar == 0 || n_non == 0 {
        return Err(Error::Input(format!(
            "need target and non-target trials, got {n_tar} and {n_non}"
        )));
    }
    let mut sorted: Vec<(f64, bool)> = trials.iter().map(|t| (t.score, t.is_target)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut points = Vec::with_capacity(sorted.len() + 1);
    let mut rejected_tar = 0usize;
    let mut rejected_non = 0usize;
    let mut i = 0;
    while i < sorted.len() {
        // threshold = sorted[i].0: everything strictly below is rejected
        points.push((
            (n_non - rejected_non) as f64 / n_non as f64,
            rejected_tar as f64 / n_tar as f64,
        ));
        let s = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == s {
            if sorted[i].1 {
                rejected_tar += 1;
            } else {
                rejected_non += 1;
            }
            i += 1;
        }
    }
    points.push((0.0, 1.0));
    Ok(points)
}

/// (FAR, FRR) at every distinct threshold, including both extremes.
pub fn det_points(trials: &TrialSet) -> Result<Vec<(f64, f64)>> {
    let refs: Vec<&Trial> = trials.trials.iter().collect();
    operating_points(&refs)
}

fn eer_from_points(points: &[(f64, f64)]) -> f64 {
    let mut prev = points[0];
    for &p in points {
        let diff = p.0 - p.1;
        if diff <= 0.0 {
            if diff == 0.0 {
                return p.0;
            }
            let prev_diff = prev.0 - prev.1;
            let t = prev_diff / (prev_diff - diff);
            return prev.0 + t * (p.0 - prev.0);
        }
        prev = p;
    }
    unreachable!("the sweep always ends at FAR = 0, FRR = 1")
}

/// Equal error rate, linearly interpolated between the two operating points
/// that bracket FAR = FRR. Trials are pooled over targets.
pub fn eer(trials: &TrialSet) -> Result<f64> {
    Ok(eer_from_points(&det_points(trials)?))
}

/// EER of each target's trials separately.
pub fn eer_per_target(trials: &TrialSet) -> Result<Vec<(String, f64)>> {
    trials
        .by_target()
        .into_iter()
        .map(|(label, group)| Ok((label.to_string(), eer_from_points(&operating_points(&group)?))))
        .collect()
}

/// Mean of the per-target EERs.
pub fn eer_target_averaged(trials: &TrialSet) -> Result<f64> {
    let per = eer_per_target(trials)?;
    Ok(per.iter().map(|(_, e)| e).sum::<f64>() / per.len() as f64)
}

/// Simplified average detection cost: the mean over targets of
/// `0.5·P_miss + 0.5·P_FA`, minimized over one global threshold.
pub fn avg_cost(trials: &TrialSet) -> Result<f64> {
    let groups = trials.by_target();
    if groups.is_empty() {
        return Err(Error::Input("no trials".into()));
    }
    let index: BTreeMap<&str, usize> = groups.keys().enumerate().map(|(i, k)| (*k, i)).collect();
    let mut totals = vec![(0usize, 0usize); groups.len()];
    for (g, group) in groups.values().enumerate() {
        for t in group {
            if t.is_target {
                totals[g].0 += 1;
            } else {
                totals[g].1 += 1;
            }
        }
        if totals[g].0 == 0 || totals[g].1 == 0 {
            return Err(Error::Input(format!(
                "target `{}` needs both target and non-target trials",
                groups.keys().nth(g).unwrap()
            )));
        }
    }
    let mut sorted: Vec<&Trial> = trials.trials.iter().collect();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));

    let mut rejected = vec![(0usize, 0usize); groups.len()];
    let cost = |rejected: &[(usize, usize)]| -> f64 {
        rejected
            .iter()
            .zip(&totals)
            .map(|(r, t)| {
                let p_miss = r.0 as f64 / t.0 as f64;
                let p_fa = (t.1 - r.1) as f64 / t.1 as f64;
                0.5 * p_miss + 0.5 * p_fa
            })
            .sum::<f64>()
            / totals.len() as f64
    };
    let mut best = f64::INFINITY;
    let mut i = 0;
    while i < sorted.len() {
        best = best.min(cost(&rejected));
        let s = sorted[i].score;
        while i < sorted.len() && sorted[i].score == s {
            let g = index[sorted[i].target_label.as_str()];
            if sorted[i].is_target {
                rejected[g].0 += 1;
            } else {
                rejected[g].1 += 1;
            }
            i += 1;
        }
    }
    Ok(best.min(cost(&rejected)))
}

/// Writes `FAR<TAB>FRR` lines.
pub fn write_det(path: impl AsRef<Path>, points: &[(f64, f64)]) -> Result<()> {
    let mut text = String::new();
    for (far, frr) in points {
        writeln!(text, "{far}\t{frr}").unwrap();
    }
    fs::write(path, text)?;
    Ok(())
}

/// One (train, test) split; indices are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified k-fold partition of `labels`. Each class is shuffled with the
/// seed and dealt round-robin over the folds, continuing where the previous
/// class stopped so fold sizes stay balanced.
pub fn stratified_kfold<L: Ord>(labels: &[L], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Input(format!("k-fold needs k >= 2, got {k}")));
    }
    let mut classes: BTreeMap<&L, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        classes.entry(l).or_default().push(i);
    }
    if let Some(small) = classes.values().find(|v| v.len() < k) {
        return Err(Error::Input(format!(
            "a class has {} members, fewer than k = {k}",
            small.len()
        )));
    }
    let mut rng = seed::rng(seed);
    let mut tests = vec![Vec::new(); k];
    let mut offset = 0;
    for members in classes.values_mut() {
        members.shuffle(&mut rng);
        for (j, &idx) in members.iter().enumerate() {
            tests[(offset + j) % k].push(idx);
        }
        offset = (offset + members.len()) % k;
    }
    Ok(tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let mut in_test = vec![false; labels.len()];
            for &i in &test {
                in_test[i] = true;
            }
            let train = (0..labels.len()).filter(|i| !in_test[*i]).collect();
            Fold { train, test }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(tar: &[f64], non: &[f64]) -> TrialSet {
        let scores: Vec<f64> = tar.iter().chain(non).copied().collect();
        let labels: Vec<bool> = tar.iter().map(|_| true).chain(non.iter().map(|_| false)).collect();
        TrialSet::from_scores(&scores, &labels).unwrap()
    }

    #[test]
    fn perfect_and_inverted() {
        assert_eq!(eer(&set(&[0.9, 0.8], &[0.2, 0.1])).unwrap(), 0.0);
        assert_eq!(eer(&set(&[0.2, 0.1], &[0.9, 0.8])).unwrap(), 1.0);
    }

    #[test]
    fn interpolated_crossing() {
        // points: (1,0) (2/3,0) (1/3,0) (1/3,1/2)... crossing on a segment
        let e = eer(&set(&[0.5, 0.9], &[0.1, 0.2, 0.6])).unwrap();
        assert!((e - 1.0 / 3.0).abs() < 1e-12, "{e}");
    }

    #[test]
    fn det_endpoints() {
        let pts = det_points(&set(&[0.9, 0.8], &[0.2, 0.1])).unwrap();
        assert_eq!(pts.first(), Some(&(1.0, 0.0)));
        assert_eq!(pts.last(), Some(&(0.0, 1.0)));
        assert!(pts.contains(&(0.0, 0.0)));
    }

    #[test]
    fn single_kind_is_rejected() {
        assert!(eer(&set(&[0.1], &[])).is_err());
        assert!(det_points(&set(&[], &[0.3])).is_err());
        assert!(TrialSet::from_scores(&[f64::NAN], &[true]).is_err());
    }

    #[test]
    fn avg_cost_cases() {
        let mk = |label: &str, score: f64, is_target: bool| Trial {
            utterance_id: "u".into(),
            target_label: label.into(),
            score,
            is_target,
        };
        let perfect = TrialSet::new(vec![
            mk("a", 1.0, true),
            mk("a", 0.0, false),
            mk("b", 2.0, true),
            mk("b", -1.0, false),
        ])
        .unwrap();
        assert_eq!(avg_cost(&perfect).unwrap(), 0.0);

        // one group: min over thresholds of 0.5(P_miss + P_FA)
        let single = TrialSet::new(vec![
            mk("a", 0.3, true),
            mk("a", 0.9, true),
            mk("a", 0.5, false),
            mk("a", 0.1, false),
        ])
        .unwrap();
        assert!((avg_cost(&single).unwrap() - 0.25).abs() < 1e-15);

        let lonely = TrialSet::new(vec![mk("a", 0.3, true)]).unwrap();
        assert!(avg_cost(&lonely).is_err());
    }

    #[test]
    fn kfold_balance() {
        let labels: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        let folds = stratified_kfold(&labels, 5, 9).unwrap();
        assert_eq!(folds.len(), 5);
        let mut seen = vec![0; 20];
        for f in &folds {
            assert_eq!(f.test.len(), 4);
            assert_eq!(f.test.iter().filter(|i| labels[**i] == 0).count(), 2);
            assert_eq!(f.train.len() + f.test.len(), 20);
            for &i in &f.test {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|c| *c == 1));
        assert_eq!(folds, stratified_kfold(&labels, 5, 9).unwrap());
        assert!(stratified_kfold(&labels[..6], 5, 9).is_err());
    }

    #[test]
    fn trial_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.tsv");
        let t = set(&[0.25, 1.5e-3], &[-2.0]);
        t.write(&p).unwrap();
        assert_eq!(TrialSet::read(&p).unwrap(), t);
        fs::write(&p, "u\tl\t0.1\tmaybe\n").unwrap();
        assert!(TrialSet::read(&p).is_err());
    }
}
