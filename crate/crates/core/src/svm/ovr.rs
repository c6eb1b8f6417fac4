use ndarray::Array2;
use rayon::prelude::*;

use super::smo::{decisions, train_binary_svm, SvmModel};
use super::GramMatrix;
use crate::error::{Error, Result};

/// One binary model per (recognizer, target).
#[derive(Debug, Clone, PartialEq)]
pub struct OvrModels {
    /// `models[l][t]`
    pub models: Vec<Vec<SvmModel>>,
    pub num_targets: usize,
}

impl OvrModels {
    pub fn num_recognizers(&self) -> usize {
        self.models.len()
    }

    /// Number of raw scores per utterance, L·T.
    pub fn num_scores(&self) -> usize {
        self.models.len() * self.num_targets
    }
}

/// Target-dependent one-vs-rest training on each recognizer's Gram matrix.
/// `labels[i]` is the target index (0-based) of training utterance i.
pub fn train_ovr(
    grams: &[GramMatrix],
    labels: &[usize],
    num_targets: usize,
    penalty: f64,
) -> Result<OvrModels> {
    if num_targets < 2 {
        return Err(Error::Input("one-vs-rest needs at least two targets".into()));
    }
    if grams.is_empty() {
        return Err(Error::Input("no recognizer channels".into()));
    }
    for (l, g) in grams.iter().enumerate() {
        if g.len() != labels.len() {
            return Err(Error::Dimension(format!(
                "recognizer {l} has {} utterances, {} labels given",
                g.len(),
                labels.len()
            )));
        }
    }
    if let Some(bad) = labels.iter().find(|t| **t >= num_targets) {
        return Err(Error::Input(format!("label {bad} outside 0..{num_targets}")));
    }
    let jobs: Vec<(usize, usize)> = (0..grams.len())
        .flat_map(|l| (0..num_targets).map(move |t| (l, t)))
        .collect();
    let trained: Vec<SvmModel> = jobs
        .par_iter()
        .map(|&(l, t)| {
            let y: Vec<i8> = labels.iter().map(|&c| if c == t { 1 } else { -1 }).collect();
            train_binary_svm(&grams[l], &y, penalty)
        })
        .collect::<Result<_>>()?;
    let mut it = trained.into_iter();
    let models = (0..grams.len())
        .map(|_| (0..num_targets).map(|_| it.next().unwrap()).collect())
        .collect();
    Ok(OvrModels {
        models,
        num_targets,
    })
}

/// Raw scores, one row per query utterance and column `l·T + t`.
/// `cross[l]` holds the queries × train kernel for recognizer l.
pub fn ovr_scores(models: &OvrModels, cross: &[Array2<f64>]) -> Result<Array2<f64>> {
    if cross.len() != models.num_recognizers() {
        return Err(Error::Dimension(format!(
            "{} kernel blocks for {} recognizers",
            cross.len(),
            models.num_recognizers()
        )));
    }
    let n = cross[0].nrows();
    if cross.iter().any(|c| c.nrows() != n) {
        return Err(Error::Dimension("kernel blocks disagree on query count".into()));
    }
    let t_count = models.num_targets;
    let mut out = Array2::zeros((n, models.num_scores()));
    for (l, per_target) in models.models.iter().enumerate() {
        for (t, model) in per_target.iter().enumerate() {
            for (i, s) in decisions(model, &cross[l])?.into_iter().enumerate() {
                out[[i, l * t_count + t]] = s;
            }
        }
    }
    Ok(out)
}
