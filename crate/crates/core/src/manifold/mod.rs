//! Points on the Stiefel/Grassmann manifold and principal-angle geometry.
//!
//! A [`Subspace`] is a D×d basis with orthonormal columns. Two bases related
//! by a right orthogonal factor (`S₂ = S₁·Q`) describe the same point of the
//! Grassmann manifold, and every similarity here is invariant under that
//! reparameterization.

mod svd;

use ndarray::{Array2, ArrayView2};
use rand_distr::{Distribution, StandardNormal};

pub use svd::{full_svd, truncated_svd, SvdResult};

use crate::error::{Error, Result};
use crate::linalg;
use crate::seed;

/// Maximum `‖SᵀS − I‖_F` accepted for a subspace basis.
pub const ORTHONORMALITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: Array2<f64>,
    source_tag: String,
}

impl Subspace {
    /// Wraps a basis after checking finiteness and orthonormality.
    pub fn new(basis: Array2<f64>, source_tag: impl Into<String>) -> Result<Self> {
        let (dim, rank) = basis.dim();
        if rank == 0 || dim == 0 {
            return Err(Error::Rank(format!("empty basis {dim}x{rank}")));
        }
        if rank > dim {
            return Err(Error::Rank(format!("rank {rank} exceeds ambient dimension {dim}")));
        }
        if !linalg::all_finite(&basis.view()) {
            return Err(Error::Input("basis has non-finite entries".into()));
        }
        let err = linalg::orthonormality_error(&basis.view());
        if err > ORTHONORMALITY_TOL {
            return Err(Error::Numerical(format!(
                "basis is not orthonormal: ‖SᵀS − I‖_F = {err:.3e}"
            )));
        }
        Ok(Subspace {
            basis,
            source_tag: source_tag.into(),
        })
    }

    pub fn basis(&self) -> &Array2<f64> {
        &self.basis
    }

    pub fn into_basis(self) -> Array2<f64> {
        self.basis
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.source_tag = tag.into();
        self
    }

    pub fn orthonormality_error(&self) -> f64 {
        linalg::orthonormality_error(&self.basis.view())
    }

    /// Another basis of the same point: `S·Q` for a d×d orthogonal `Q`.
    pub fn reparameterized(&self, q: &ArrayView2<f64>) -> Result<Subspace> {
        if q.dim() != (self.rank(), self.rank()) {
            return Err(Error::Dimension(format!(
                "reparameterization must be {0}x{0}, got {1}x{2}",
                self.rank(),
                q.nrows(),
                q.ncols()
            )));
        }
        Subspace::new(self.basis.dot(q), self.source_tag.clone())
    }

    /// The orthogonal projector `SSᵀ` (D×D).
    pub fn projector(&self) -> Array2<f64> {
        self.basis.dot(&self.basis.t())
    }
}

/// Cosines of the principal angles, non-increasing, clamped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalAngleSet {
    cosines: Vec<f64>,
}

impl PrincipalAngleSet {
    pub fn cosines(&self) -> &[f64] {
        &self.cosines
    }

    pub fn angles(&self) -> Vec<f64> {
        self.cosines.iter().map(|c| c.acos()).collect()
    }

    pub fn len(&self) -> usize {
        self.cosines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cosines.is_empty()
    }

    pub fn sum_sq(&self) -> f64 {
        self.cosines.iter().map(|c| c * c).sum()
    }
}

fn check_ambient(s1: &Subspace, s2: &Subspace) -> Result<()> {
    if s1.ambient_dim() != s2.ambient_dim() {
        return Err(Error::Dimension(format!(
            "subspaces live in R^{} and R^{}",
            s1.ambient_dim(),
            s2.ambient_dim()
        )));
    }
    Ok(())
}

/// `S₁ᵀS₂`, the d₁×d₂ cross-product of the bases.
pub fn cross_product(s1: &Subspace, s2: &Subspace) -> Result<Array2<f64>> {
    check_ambient(s1, s2)?;
    Ok(s1.basis.t().dot(&s2.basis))
}

/// Principal angles from the singular values of `S₁ᵀS₂`. Unequal ranks give
/// `min(d₁, d₂)` angles.
pub fn principal_angles(s1: &Subspace, s2: &Subspace) -> Result<PrincipalAngleSet> {
    let m = cross_product(s1, s2)?;
    let q = m.nrows().min(m.ncols());
    let svd = truncated_svd(&m.view(), q)?;
    let cosines = svd
        .singular_values
        .iter()
        .map(|c| c.clamp(0.0, 1.0))
        .collect();
    Ok(PrincipalAngleSet { cosines })
}

/// `Σ cos²θᵢ`, in `[0, min(d₁, d₂)]`.
pub fn subspace_similarity(s1: &Subspace, s2: &Subspace) -> Result<f64> {
    Ok(principal_angles(s1, s2)?.sum_sq())
}

/// Projection-embedding distance `sqrt(2d − 2‖S₁ᵀS₂‖_F²)` for equal ranks.
pub fn subspace_distance(s1: &Subspace, s2: &Subspace) -> Result<f64> {
    check_ambient(s1, s2)?;
    if s1.rank() != s2.rank() {
        return Err(Error::Rank(format!(
            "distance needs equal ranks, got {} and {}",
            s1.rank(),
            s2.rank()
        )));
    }
    let d = s1.rank() as f64;
    let k = projection_kernel(s1, s2)?;
    Ok((2.0 * d - 2.0 * k).max(0.0).sqrt())
}

/// Projection kernel `‖S₁ᵀS₂‖_F²`.
pub fn projection_kernel(s1: &Subspace, s2: &Subspace) -> Result<f64> {
    let m = cross_product(s1, s2)?;
    Ok(linalg::frobenius_sq(&m.view()))
}

/// Orthogonal `A` minimizing `‖X_to − A·X_from‖_F`, computed as `UVᵀ` from the
/// SVD of `X_to·X_fromᵀ`. When that product is rank deficient the minimizer is
/// not unique and one of them is returned.
pub fn orthogonal_procrustes(
    x_from: &ArrayView2<f64>,
    x_to: &ArrayView2<f64>,
) -> Result<Array2<f64>> {
    if x_from.dim() != x_to.dim() {
        return Err(Error::Dimension(format!(
            "procrustes inputs are {:?} and {:?}",
            x_from.dim(),
            x_to.dim()
        )));
    }
    if x_from.ncols() == 0 || x_from.nrows() == 0 {
        return Err(Error::Input("procrustes needs at least one column".into()));
    }
    let m = x_to.dot(&x_from.t());
    let svd = full_svd(&m.view())?;
    Ok(svd.left.dot(&svd.right.t()))
}

/// A Haar-distributed D×d orthonormal basis: Gaussian matrix, QR with a
/// positive R diagonal. Same seed, same basis.
pub fn random_orthonormal(ambient_dim: usize, rank: usize, seed: u64) -> Result<Subspace> {
    let mut rng = seed::rng(seed);
    random_orthonormal_with(ambient_dim, rank, &mut rng)
}

pub fn random_orthonormal_with(
    ambient_dim: usize,
    rank: usize,
    rng: &mut seed::Rng,
) -> Result<Subspace> {
    if rank == 0 || rank > ambient_dim {
        return Err(Error::Rank(format!(
            "cannot draw rank {rank} basis in dimension {ambient_dim}"
        )));
    }
    loop {
        let mut g = Array2::from_shape_simple_fn((ambient_dim, rank), || {
            StandardNormal.sample(&mut *rng)
        });
        // A dependent Gaussian draw has probability zero; redraw if it happens.
        if linalg::gram_schmidt(&mut g).is_ok() {
            return Subspace::new(g, "haar");
        }
    }
}

/// Random d×d orthogonal matrix (Haar), handy for reparameterization checks.
pub fn random_orthogonal(d: usize, rng: &mut seed::Rng) -> Array2<f64> {
    random_orthonormal_with(d, d, rng)
        .expect("square draw is always valid")
        .into_basis()
}

/// Sum of squared residuals `‖Z − SSᵀZ‖_F²`.
pub fn projection_residual(s: &Subspace, z: &ArrayView2<f64>) -> Result<f64> {
    if z.nrows() != s.ambient_dim() {
        return Err(Error::Dimension(format!(
            "data has {} rows, subspace lives in R^{}",
            z.nrows(),
            s.ambient_dim()
        )));
    }
    let coeffs = s.basis.t().dot(z);
    let r = z - &s.basis.dot(&coeffs);
    Ok(linalg::frobenius_sq(&r.view()))
}
