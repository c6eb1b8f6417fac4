//! From a phonetic sequence to an orthonormal subspace.
//!
//! Three routes are available:
//!
//! * **OLR** – top-d left singular vectors of the stacked matrix Z, the
//!   orthonormal S minimizing `‖Z − SW‖_F`.
//! * **ODL** – the same factorization with an ℓ0 penalty on the loadings W,
//!   solved by alternating a hard-threshold step for W and an orthogonal
//!   Procrustes step for S. Both steps are exact minimizers, so the objective
//!   never increases.
//! * **DLM** – identify `x_{k+1} = A·x_k`, `y_k = C·x_k` by the subspace method
//!   (truncated SVD for C and the states, Procrustes for an orthogonal A) and
//!   use the normalized observability matrix as the subspace.

use std::path::Path;
use std::str::FromStr;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::linalg;
use crate::manifold::{orthogonal_procrustes, truncated_svd, Subspace};
use crate::matrix_io::{self, Metadata};
use crate::phonetics::{stack_context, PhoneticSequence};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Olr,
    Odl,
    Dlm,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Olr => "olr",
            Method::Odl => "odl",
            Method::Dlm => "dlm",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "olr" => Ok(Method::Olr),
            "odl" => Ok(Method::Odl),
            "dlm" => Ok(Method::Dlm),
            other => Err(Error::Config(format!("unknown construction method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdlConfig {
    /// Hard-threshold level λ_odl; the penalty weight is λ².
    pub lambda_odl: f64,
    /// Number of alternating updates J.
    pub iterations: usize,
}

impl Default for OdlConfig {
    fn default() -> Self {
        OdlConfig {
            lambda_odl: 1e-4,
            iterations: 50,
        }
    }
}

impl OdlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_odl >= 0.0) || !self.lambda_odl.is_finite() {
            return Err(Error::Config(format!("lambda_odl must be >= 0, got {}", self.lambda_odl)));
        }
        if self.iterations == 0 {
            return Err(Error::Config("ODL needs at least one iteration".into()));
        }
        Ok(())
    }
}

/// Full description of how an utterance becomes a subspace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubspaceSpec {
    pub method: Method,
    /// Context order n.
    pub context_order: usize,
    /// Sample subspace ratio α ∈ (0, 1).
    pub sample_ratio: f64,
    pub odl: OdlConfig,
}

impl SubspaceSpec {
    pub fn new(method: Method, context_order: usize, sample_ratio: f64) -> Self {
        SubspaceSpec {
            method,
            context_order,
            sample_ratio,
            odl: OdlConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.context_order < 1 {
            return Err(Error::Config("context order must be >= 1".into()));
        }
        if !(self.sample_ratio > 0.0 && self.sample_ratio < 1.0) {
            return Err(Error::Config(format!(
                "sample ratio must lie in (0, 1), got {}",
                self.sample_ratio
            )));
        }
        self.odl.validate()
    }

    /// Subspace rank for a phone set of `num_units`: `max(⌊α·M⌋, 2)`.
    pub fn rank_for(&self, num_units: usize) -> usize {
        sample_rank(self.sample_ratio, num_units)
    }
}

/// `max(⌊ratio·size⌋, 2)`, the rank rule shared by sample and reference
/// subspaces.
pub fn sample_rank(ratio: f64, size: usize) -> usize {
    ((ratio * size as f64).floor() as usize).max(2)
}

fn check_factorizable(z: &ArrayView2<f64>, d: usize) -> Result<()> {
    let (dim, phones) = z.dim();
    if d == 0 || d > dim {
        return Err(Error::Rank(format!("rank {d} outside 1..={dim}")));
    }
    if phones < dim {
        return Err(Error::ShortUtterance { phones, dim });
    }
    Ok(())
}

/// Orthogonal linear regression: the top-d left singular vectors of Z (D×K).
pub fn construct_olr(z: &ArrayView2<f64>, d: usize) -> Result<Subspace> {
    check_factorizable(z, d)?;
    let svd = truncated_svd(z, d)?;
    Subspace::new(svd.left, "olr")
}

/// Hard threshold: keeps entries with `|x| > lambda`, zeroes the rest.
pub fn threshold_operator(x: &ArrayView2<f64>, lambda: f64) -> Array2<f64> {
    x.mapv(|v| if v.abs() > lambda { v } else { 0.0 })
}

/// `‖Z − SW‖_F² + λ²·‖W‖₀`.
pub fn odl_objective(
    z: &ArrayView2<f64>,
    s: &ArrayView2<f64>,
    w: &ArrayView2<f64>,
    lambda: f64,
) -> Result<f64> {
    if s.nrows() != z.nrows() || s.ncols() != w.nrows() || w.ncols() != z.ncols() {
        return Err(Error::Dimension(format!(
            "Z {:?}, S {:?}, W {:?} do not chain",
            z.dim(),
            s.dim(),
            w.dim()
        )));
    }
    let residual = z - &s.dot(w);
    let nnz = w.iter().filter(|v| **v != 0.0).count();
    Ok(linalg::frobenius_sq(&residual.view()) + lambda * lambda * nnz as f64)
}

/// Result of the alternating ODL solver.
#[derive(Debug, Clone)]
pub struct OdlOutcome {
    pub subspace: Subspace,
    /// Loadings `O_λ(SᵀZ)` for the returned subspace.
    pub loadings: Array2<f64>,
    /// Objective after each W-step: entry j is `f(S⁽ʲ⁾, W⁽ʲ⁾)`, and the last
    /// entry is evaluated at the returned subspace.
    pub objective_trace: Vec<f64>,
    /// True when every loading was thresholded away (`ZWᵀ = 0`) and the
    /// solver stopped keeping the previous S.
    pub early_stopped: bool,
}

/// Orthogonal dictionary learning. The initial S holds `d` distinct columns
/// of the identity, sampled without replacement from `seed`.
pub fn construct_odl(
    z: &ArrayView2<f64>,
    d: usize,
    cfg: &OdlConfig,
    seed: u64,
) -> Result<OdlOutcome> {
    check_factorizable(z, d)?;
    cfg.validate()?;
    let dim = z.nrows();
    let mut rng = seed::rng(seed);
    let mut s = Array2::zeros((dim, d));
    for (j, row) in sample(&mut rng, dim, d).into_iter().enumerate() {
        s[[row, j]] = 1.0;
    }
    odl_from(z, s, cfg)
}

/// ODL from a caller-supplied orthonormal starting point.
pub fn odl_from(z: &ArrayView2<f64>, init: Array2<f64>, cfg: &OdlConfig) -> Result<OdlOutcome> {
    let d = init.ncols();
    check_factorizable(z, d)?;
    if init.nrows() != z.nrows() {
        return Err(Error::Dimension("initial basis does not match Z".into()));
    }
    let lambda = cfg.lambda_odl;
    let mut s = init;
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    let mut early_stopped = false;
    for _ in 0..cfg.iterations {
        let w = threshold_operator(&s.t().dot(z).view(), lambda);
        trace.push(odl_objective(z, &s.view(), &w.view(), lambda)?);
        let target = z.dot(&w.t());
        if target.iter().all(|v| *v == 0.0) {
            early_stopped = true;
            break;
        }
        let svd = truncated_svd(&target.view(), d)?;
        s = svd.left.dot(&svd.right.t());
    }
    let w = threshold_operator(&s.t().dot(z).view(), lambda);
    trace.push(odl_objective(z, &s.view(), &w.view(), lambda)?);
    Ok(OdlOutcome {
        subspace: Subspace::new(s, "odl")?,
        loadings: w,
        objective_trace: trace,
        early_stopped,
    })
}

/// Orthogonal transition `A` (d×d) and column-orthonormal generator `C` (M×d).
#[derive(Debug, Clone, PartialEq)]
pub struct DlmModel {
    transition: Array2<f64>,
    generator: Array2<f64>,
}

impl DlmModel {
    pub fn new(transition: Array2<f64>, generator: Array2<f64>) -> Result<Self> {
        let d = transition.nrows();
        if transition.ncols() != d || generator.ncols() != d {
            return Err(Error::Dimension(format!(
                "A is {:?}, C is {:?}",
                transition.dim(),
                generator.dim()
            )));
        }
        let ea = linalg::orthonormality_error(&transition.view());
        let ec = linalg::orthonormality_error(&generator.view());
        if ea > crate::manifold::ORTHONORMALITY_TOL || ec > crate::manifold::ORTHONORMALITY_TOL {
            return Err(Error::Numerical(format!(
                "DLM operators not orthonormal (A: {ea:.2e}, C: {ec:.2e})"
            )));
        }
        Ok(DlmModel {
            transition,
            generator,
        })
    }

    pub fn transition(&self) -> &Array2<f64> {
        &self.transition
    }

    pub fn generator(&self) -> &Array2<f64> {
        &self.generator
    }

    pub fn state_dim(&self) -> usize {
        self.transition.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct DlmFit {
    pub model: DlmModel,
    /// Estimated states `X̂ = ΣVᵀ` (d×K).
    pub states: Array2<f64>,
}

/// Subspace-method identification on an M×K observation matrix.
pub fn identify_dlm(observations: &ArrayView2<f64>, d: usize) -> Result<DlmFit> {
    let (m, k) = observations.dim();
    if k < 2 {
        return Err(Error::Input(format!("DLM needs at least 2 observations, got {k}")));
    }
    if d == 0 || d > m.min(k) {
        return Err(Error::Rank(format!("state dimension {d} outside 1..={}", m.min(k))));
    }
    let svd = truncated_svd(observations, d)?;
    let states = &svd.right.t() * &svd.singular_values.view().insert_axis(Axis(1));
    let transition = orthogonal_procrustes(
        &states.slice(s![.., ..k - 1]),
        &states.slice(s![.., 1..]),
    )?;
    Ok(DlmFit {
        model: DlmModel::new(transition, svd.left)?,
        states,
    })
}

/// Fits a DLM to the phonetic vectors of `seq` (used raw, no centering).
pub fn fit_dlm(seq: &PhoneticSequence, d: usize) -> Result<DlmModel> {
    identify_dlm(&seq.observations(), d).map(|fit| fit.model)
}

/// `(1/√n)·[C; CA; …; CAⁿ⁻¹]`. The scale makes the columns orthonormal.
pub fn dlm_observability(model: &DlmModel, n: usize) -> Result<Subspace> {
    if n < 1 {
        return Err(Error::Input("context order must be at least 1".into()));
    }
    let mut blocks = Vec::with_capacity(n);
    let mut block = model.generator.clone();
    for i in 0..n {
        if i > 0 {
            block = block.dot(&model.transition);
        }
        blocks.push(block.clone());
    }
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    let stacked = concatenate(Axis(0), &views).expect("blocks share a column count");
    Subspace::new(stacked / (n as f64).sqrt(), "dlm")
}

/// Builds the subspace for one utterance. `seed` only matters for ODL.
pub fn construct(seq: &PhoneticSequence, spec: &SubspaceSpec, seed: u64) -> Result<Subspace> {
    spec.validate()?;
    let d = spec.rank_for(seq.num_units());
    let subspace = match spec.method {
        Method::Olr => {
            let z = stack_context(seq, spec.context_order)?;
            construct_olr(&z.data().view(), d)?
        }
        Method::Odl => {
            let z = stack_context(seq, spec.context_order)?;
            construct_odl(&z.data().view(), d, &spec.odl, seed)?.subspace
        }
        Method::Dlm => dlm_observability(&fit_dlm(seq, d)?, spec.context_order)?,
    };
    Ok(subspace.with_tag(seq.phoneset_id()))
}

/// Writes a subspace basis plus a sidecar recording how it was built.
pub fn save_subspace(path: impl AsRef<Path>, subspace: &Subspace, spec: &SubspaceSpec) -> Result<()> {
    let path = path.as_ref();
    matrix_io::write_matrix(path, subspace.basis())?;
    Metadata::new()
        .with("method", spec.method)
        .with("n", spec.context_order)
        .with("alpha", spec.sample_ratio)
        .with("d", subspace.rank())
        .with("source_tag", subspace.source_tag())
        .write(matrix_io::sidecar_path(path))
}

pub fn load_subspace(path: impl AsRef<Path>) -> Result<(Subspace, Metadata)> {
    let path = path.as_ref();
    let basis = matrix_io::read_matrix(path)?;
    let meta = Metadata::read(matrix_io::sidecar_path(path))?;
    let tag = meta.get("source_tag").unwrap_or_default().to_string();
    Ok((Subspace::new(basis, tag)?, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::principal_angles;
    use ndarray::array;

    #[test]
    fn olr_picks_dominant_axis() {
        let z = array![[2.0, 0.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0, 0.0]];
        let s = construct_olr(&z.view(), 1).unwrap();
        assert_eq!(s.basis(), &array![[1.0], [0.0]]);
    }

    #[test]
    fn olr_rank_one_reconstructs() {
        let u = array![0.6, 0.8];
        let v = array![1.0, 2.0, 0.0, -1.0];
        let z = u.view().insert_axis(Axis(1)).dot(&v.view().insert_axis(Axis(0)));
        let s = construct_olr(&z.view(), 1).unwrap();
        assert!(crate::manifold::projection_residual(&s, &z.view()).unwrap() < 1e-24);
    }

    #[test]
    fn olr_errors() {
        let z = Array2::<f64>::ones((4, 3));
        assert!(matches!(
            construct_olr(&z.view(), 2),
            Err(Error::ShortUtterance { phones: 3, dim: 4 })
        ));
        let z = Array2::<f64>::ones((2, 5));
        assert!(matches!(construct_olr(&z.view(), 3), Err(Error::Rank(_))));
    }

    #[test]
    fn threshold_is_strict() {
        let x = array![[0.3, -0.7, 0.5]];
        assert_eq!(threshold_operator(&x.view(), 0.5), array![[0.0, -0.7, 0.0]]);
        let y = array![[0.0, -1e-300, 2.0]];
        assert_eq!(threshold_operator(&y.view(), 0.0), y);
    }

    #[test]
    fn objective_edge_values() {
        let z = array![[1.0, 2.0], [0.0, 0.0]];
        let s = array![[1.0], [0.0]];
        let w = s.t().dot(&z);
        assert!(odl_objective(&z.view(), &s.view(), &w.view(), 0.0).unwrap().abs() < 1e-30);
        let zero = Array2::zeros((1, 2));
        assert_eq!(odl_objective(&z.view(), &s.view(), &zero.view(), 0.3).unwrap(), 5.0);
        assert!(odl_objective(&z.view(), &s.view(), &zero.t(), 0.0).is_err());
    }

    #[test]
    fn odl_degenerate_threshold_stops_early() {
        let z = array![[0.1, 0.2, 0.1], [0.05, 0.1, 0.2]];
        let cfg = OdlConfig {
            lambda_odl: 10.0,
            iterations: 50,
        };
        let out = construct_odl(&z.view(), 1, &cfg, 3).unwrap();
        assert!(out.early_stopped);
        assert_eq!(out.objective_trace.len(), 2);
        // The initial basis is a coordinate vector and comes back untouched.
        let b = out.subspace.basis();
        assert_eq!(b.iter().filter(|v| **v == 1.0).count(), 1);
        assert_eq!(b.iter().filter(|v| **v == 0.0).count(), 1);
    }

    #[test]
    fn constant_sequence_dlm() {
        let c = [0.2, 0.5, 0.3];
        let mut y = Array2::zeros((6, 3));
        for mut row in y.rows_mut() {
            row.assign(&ndarray::arr1(&c));
        }
        let seq = PhoneticSequence::new(y, "p").unwrap();
        let model = fit_dlm(&seq, 1).unwrap();
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (i, v) in c.iter().enumerate() {
            assert!((model.generator()[[i, 0]] - v / norm).abs() < 1e-12);
        }
        assert!((model.transition()[[0, 0]] - 1.0).abs() < 1e-12);

        let s1 = dlm_observability(&model, 1).unwrap();
        assert_eq!(s1.basis(), model.generator());
        let s3 = dlm_observability(&model, 3).unwrap();
        assert_eq!(s3.ambient_dim(), 9);
        let third = 1.0 / 3f64.sqrt();
        for blk in 0..3 {
            for i in 0..3 {
                assert!((s3.basis()[[blk * 3 + i, 0]] - third * c[i] / norm).abs() < 1e-12);
            }
        }
        assert!((s3.basis().t().dot(s3.basis())[[0, 0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dlm_errors() {
        let y = Array2::<f64>::ones((3, 1));
        assert!(identify_dlm(&y.view(), 1).is_err());
        let y = Array2::<f64>::ones((3, 4));
        assert!(matches!(identify_dlm(&y.view(), 4), Err(Error::Rank(_))));
    }

    #[test]
    fn rank_rule() {
        let spec = SubspaceSpec::new(Method::Olr, 3, 0.6);
        assert_eq!(spec.rank_for(46), 27);
        assert_eq!(SubspaceSpec::new(Method::Olr, 3, 0.03).rank_for(46), 2);
        assert!(SubspaceSpec::new(Method::Olr, 0, 0.5).validate().is_err());
        assert!(SubspaceSpec::new(Method::Olr, 1, 1.0).validate().is_err());
        assert_eq!("ODL".parse::<Method>().unwrap(), Method::Odl);
    }

    #[test]
    fn olr_dispatch_with_unit_context() {
        let mut y = Array2::zeros((12, 4));
        for k in 0..12 {
            y[[k, k % 4]] = 0.7;
            y[[k, (k * 3 + 1) % 4]] += 0.3;
        }
        let seq = PhoneticSequence::new(y, "p").unwrap();
        let spec = SubspaceSpec::new(Method::Olr, 1, 0.5);
        let via_spec = construct(&seq, &spec, 0).unwrap();
        let direct = construct_olr(&seq.observations(), 2).unwrap();
        assert_eq!(via_spec.basis(), direct.basis());
        assert_eq!(via_spec.source_tag(), "p");
        let pa = principal_angles(&via_spec, &direct).unwrap();
        assert!(pa.cosines().iter().all(|c| *c > 1.0 - 1e-12));
    }

    #[test]
    fn subspace_archive_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.gsm");
        let s = crate::manifold::random_orthonormal(6, 2, 4).unwrap().with_tag("rec0");
        let spec = SubspaceSpec::new(Method::Dlm, 3, 0.4);
        save_subspace(&p, &s, &spec).unwrap();
        let (back, meta) = load_subspace(&p).unwrap();
        assert_eq!(back, s);
        assert_eq!(meta.get("method"), Some("dlm"));
        assert_eq!(meta.get("d"), Some("2"));
    }
}
