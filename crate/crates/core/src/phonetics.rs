//! Phonetic vectors: posteriorgram ingestion, segment pooling and context
//! stacking.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::matrix_io::{self, Metadata};

/// Row-sum tolerance for a phonetic sequence.
pub const STOCHASTIC_TOL: f64 = 1e-6;
/// Looser tolerance for raw frame posteriors coming from a recognizer.
pub const FRAME_STOCHASTIC_TOL: f64 = 1e-4;

/// K×M posteriors, one phonetic vector per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PhoneticSequence {
    posteriors: Array2<f64>,
    phoneset_id: String,
}

impl PhoneticSequence {
    pub fn new(posteriors: Array2<f64>, phoneset_id: impl Into<String>) -> Result<Self> {
        if posteriors.nrows() == 0 || posteriors.ncols() == 0 {
            return Err(Error::Input(format!(
                "posteriorgram must be non-empty, got {}x{}",
                posteriors.nrows(),
                posteriors.ncols()
            )));
        }
        check_rows(&posteriors.view(), STOCHASTIC_TOL)?;
        Ok(PhoneticSequence {
            posteriors,
            phoneset_id: phoneset_id.into(),
        })
    }

    pub fn posteriors(&self) -> &Array2<f64> {
        &self.posteriors
    }

    pub fn phoneset_id(&self) -> &str {
        &self.phoneset_id
    }

    /// K
    pub fn num_phones(&self) -> usize {
        self.posteriors.nrows()
    }

    /// M
    pub fn num_units(&self) -> usize {
        self.posteriors.ncols()
    }

    /// The M×K observation matrix whose columns are the phonetic vectors.
    pub fn observations(&self) -> ArrayView2<'_, f64> {
        self.posteriors.t()
    }
}

fn check_rows(m: &ArrayView2<f64>, tol: f64) -> Result<()> {
    for (i, row) in m.rows().into_iter().enumerate() {
        if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Input(format!("row {i} has negative or non-finite entries")));
        }
        let sum: f64 = row.sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::Stochasticity { row: i, sum });
        }
    }
    Ok(())
}

/// D×K stacked super-vectors, D = n·M.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedMatrix {
    data: Array2<f64>,
    context_order: usize,
    num_units: usize,
}

impl StackedMatrix {
    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn context_order(&self) -> usize {
        self.context_order
    }

    pub fn num_units(&self) -> usize {
        self.num_units
    }

    /// D = n·M
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// K
    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }
}

/// Collapses frame-level state posteriors into one phonetic vector per
/// segment: states are summed into their unit, frames of a segment are
/// averaged, and the result is renormalized.
///
/// `state_to_unit[s]` is the unit that state `s` belongs to; segments are
/// half-open frame ranges `[start, end)`, ordered and non-overlapping.
pub fn segment_posteriors(
    frame_posteriors: &ArrayView2<f64>,
    state_to_unit: &[usize],
    num_units: usize,
    segmentation: &[(usize, usize)],
    phoneset_id: &str,
) -> Result<PhoneticSequence> {
    let (frames, states) = frame_posteriors.dim();
    if state_to_unit.len() != states {
        return Err(Error::Dimension(format!(
            "{states} states but {} entries in the state map",
            state_to_unit.len()
        )));
    }
    if let Some(bad) = state_to_unit.iter().find(|u| **u >= num_units) {
        return Err(Error::Input(format!("state maps to unit {bad} >= {num_units}")));
    }
    if segmentation.is_empty() {
        return Err(Error::Input("no segments".into()));
    }
    check_rows(frame_posteriors, FRAME_STOCHASTIC_TOL)?;

    let mut out = Array2::zeros((segmentation.len(), num_units));
    let mut prev_end = 0;
    for (k, &(start, end)) in segmentation.iter().enumerate() {
        if start >= end {
            return Err(Error::Input(format!("segment {k} [{start}, {end}) is empty")));
        }
        if end > frames {
            return Err(Error::Input(format!(
                "segment {k} ends at frame {end}, beyond {frames} frames"
            )));
        }
        if start < prev_end {
            return Err(Error::Input(format!("segment {k} overlaps or is out of order")));
        }
        prev_end = end;
        let mut row = out.row_mut(k);
        for t in start..end {
            for (s, &p) in frame_posteriors.row(t).iter().enumerate() {
                row[state_to_unit[s]] += p;
            }
        }
        let total: f64 = row.sum();
        if total <= 0.0 {
            return Err(Error::Input(format!("segment {k} carries no posterior mass")));
        }
        row.mapv_inplace(|v| v / total);
    }
    PhoneticSequence::new(out, phoneset_id)
}

/// Stacks each phonetic vector with its `n − 1` predecessors, oldest on top,
/// zero-padding before the start of the utterance. Column k of the result is
/// `[y_{k−n+1}; …; y_{k−1}; y_k]`.
pub fn stack_context(seq: &PhoneticSequence, n: usize) -> Result<StackedMatrix> {
    if n < 1 {
        return Err(Error::Input("context order must be at least 1".into()));
    }
    let (k_len, m) = seq.posteriors.dim();
    let mut data = Array2::zeros((n * m, k_len));
    for k in 0..k_len {
        for block in 0..n {
            // block n-1 holds y_k, block 0 holds y_{k-n+1}
            let lag = n - 1 - block;
            if lag > k {
                continue;
            }
            data.slice_mut(s![block * m..(block + 1) * m, k])
                .assign(&seq.posteriors.row(k - lag));
        }
    }
    Ok(StackedMatrix {
        data,
        context_order: n,
        num_units: m,
    })
}

/// Renormalize rows whose sum differs from 1 by more than rounding noise.
const RENORMALIZE_EPS: f64 = 64.0 * f64::EPSILON;

/// Writes `seq` as a matrix file plus `<path>.meta` holding `phoneset_id` and
/// `num_units`.
pub fn save_posteriorgram(seq: &PhoneticSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    matrix_io::write_matrix(path, &seq.posteriors)?;
    Metadata::new()
        .with("phoneset_id", &seq.phoneset_id)
        .with("num_units", seq.num_units())
        .write(matrix_io::sidecar_path(path))
}

/// Reads a posteriorgram. Rows within 1e-6 of stochastic are renormalized;
/// anything else is rejected.
pub fn load_posteriorgram(path: impl AsRef<Path>) -> Result<PhoneticSequence> {
    let path = path.as_ref();
    let mut m = matrix_io::read_matrix(path)?;
    let meta = Metadata::read(matrix_io::sidecar_path(path))?;
    let phoneset_id: String = meta.require("phoneset_id", path)?;
    let num_units: usize = meta.require("num_units", path)?;
    if num_units != m.ncols() {
        return Err(Error::format(
            path,
            format!("sidecar declares {num_units} units, matrix has {}", m.ncols()),
        ));
    }
    check_rows(&m.view(), STOCHASTIC_TOL)?;
    for mut row in m.rows_mut() {
        let sum: f64 = row.sum();
        if (sum - 1.0).abs() > RENORMALIZE_EPS {
            row.mapv_inplace(|v| v / sum);
        }
    }
    PhoneticSequence::new(m, phoneset_id)
}

/// One line of a dataset manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub utterance_id: String,
    pub label: String,
    /// One posteriorgram per recognizer, in recognizer order.
    pub paths: Vec<PathBuf>,
}

/// Writes `utterance_id<TAB>label<TAB>path_1<TAB>…<TAB>path_L` lines.
pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let mut text = String::new();
    for e in entries {
        if e.utterance_id.contains(['\t', '\n']) || e.label.contains(['\t', '\n']) {
            return Err(Error::Input(format!("tab or newline in id `{}`", e.utterance_id)));
        }
        text.push_str(&e.utterance_id);
        text.push('\t');
        text.push_str(&e.label);
        for p in &e.paths {
            text.push('\t');
            text.push_str(&p.to_string_lossy());
        }
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Reads a manifest; relative posteriorgram paths are resolved against the
/// manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(""));
    let text = fs::read_to_string(path)?;
    let mut entries = Vec::new();
    let mut channels = None;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(Error::format(
                path,
                format!("line {}: need id, label and at least one path", lineno + 1),
            ));
        }
        let n = fields.len() - 2;
        if *channels.get_or_insert(n) != n {
            return Err(Error::format(
                path,
                format!("line {}: {n} recognizer paths, expected {}", lineno + 1, channels.unwrap()),
            ));
        }
        entries.push(ManifestEntry {
            utterance_id: fields[0].to_string(),
            label: fields[1].to_string(),
            paths: fields[2..]
                .iter()
                .map(|p| {
                    let p = Path::new(p);
                    if p.is_absolute() {
                        p.to_path_buf()
                    } else {
                        base.join(p)
                    }
                })
                .collect(),
        });
    }
    Ok(entries)
}
