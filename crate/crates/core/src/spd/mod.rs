//! Dense symmetric / SPD matrices and the affine-invariant geometry on them.
//!
//! Congruence is written `Wᵀ C W` with `W ∈ R^{d_in × d_out}` everywhere in
//! this crate.

mod eig;
mod geometry;
mod spectral;
mod tangent;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use eig::{jacobi_eigen, EigDecomposition, MAX_SWEEPS};
pub use geometry::{
    airm_distance, congruence, congruence_mat, exp_map, karcher_mean, log_euclidean_mean, mean_log,
    log_euclidean_merge, log_map, spd_exp, spd_log, spd_power, spectral_mat, sym_eig,
};
pub use spectral::{
    effective_eigenvalues, floored_eigenvalues, frechet_kernel, SpectralFn, DEGENERATE_GAP,
    EIGEN_FLOOR,
};
pub use tangent::{tangent_len, unvec_upper, unvec_upper_mat, vec_upper, vec_upper_mat, TangentVector};

pub type Mat = DMatrix<f64>;

pub(crate) fn symmetrize_in_place(m: &mut Mat) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let s = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
}

fn check_square_finite(m: &Mat) -> Result<()> {
    if m.nrows() == 0 || m.nrows() != m.ncols() {
        return Err(Error::Shape(format!(
            "expected a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    Ok(())
}

/// Symmetric matrix; symmetry is enforced on construction as `(M + Mᵀ)/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(Mat);

impl SymMatrix {
    pub fn new(mut m: Mat) -> Result<Self> {
        check_square_finite(&m)?;
        symmetrize_in_place(&mut m);
        Ok(Self(m))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(Mat::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(Mat::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(Mat::from_diagonal(&nalgebra::DVector::from_column_slice(diag)))
    }

    /// Wraps a matrix the caller guarantees to be exactly symmetric.
    pub(crate) fn from_symmetric(m: Mat) -> Self {
        debug_assert!(m.nrows() == m.ncols());
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        Self(&self.0 * s)
    }
}

/// Symmetric positive-definite matrix.
///
/// Construction rejects genuinely indefinite input (`λ_min < −1e-10·λ_max`)
/// but tolerates the tiny-eigenvalue band that `spd_log` / `spd_power` clamp.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix(Mat);

impl SpdMatrix {
    pub fn new(m: Mat) -> Result<Self> {
        let sym = SymMatrix::new(m)?;
        let eig = jacobi_eigen(sym.as_mat())?;
        let max = eig.max_eigenvalue();
        let floor = EIGEN_FLOOR * max.max(0.0);
        if max <= 0.0 || eig.min_eigenvalue() < -floor {
            return Err(Error::NotPositiveDefinite {
                min_eig: eig.min_eigenvalue(),
                floor: -floor,
            });
        }
        Ok(Self(sym.0))
    }

    pub fn identity(dim: usize) -> Self {
        Self(Mat::identity(dim, dim))
    }

    /// Diagonal SPD matrix; panics on a non-positive entry.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        assert!(diag.iter().all(|&d| d > 0.0), "diagonal must be positive");
        Self(Mat::from_diagonal(&nalgebra::DVector::from_column_slice(diag)))
    }

    /// Wraps a matrix known to be symmetric positive definite by construction.
    pub(crate) fn from_spd(m: Mat) -> Self {
        debug_assert!(m.nrows() == m.ncols());
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }

    pub fn as_sym(&self) -> SymMatrix {
        SymMatrix(self.0.clone())
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Positive rescaling, e.g. trace normalization.
    pub fn scaled(&self, s: f64) -> SpdMatrix {
        assert!(s > 0.0, "SPD rescale needs a positive factor");
        Self(&self.0 * s)
    }
}

impl AsRef<Mat> for SpdMatrix {
    fn as_ref(&self) -> &Mat {
        &self.0
    }
}

impl AsRef<Mat> for SymMatrix {
    fn as_ref(&self) -> &Mat {
        &self.0
    }
}
