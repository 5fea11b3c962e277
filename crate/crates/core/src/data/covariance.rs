use crate::error::{Error, Result};
use crate::spd::{jacobi_eigen, Mat, SpdMatrix, EIGEN_FLOOR};

/// Ridge factor `δ` for short epochs: `C + δ·tr(C)/dim·I`.
pub const SHRINKAGE: f64 = 1e-3;

/// Rescales so that the trace equals the dimension.
pub fn trace_normalize(c: &SpdMatrix) -> SpdMatrix {
    c.scaled(c.dim() as f64 / c.trace())
}

/// Sample covariance `X Xᵀ / (T − 1)` of a `C × T` epoch, trace-normalized to `tr = C`.
///
/// Without `shrinkage` the epoch needs `T ≥ C + 1` samples.
pub fn estimate_covariance(x: &Mat, shrinkage: bool) -> Result<SpdMatrix> {
    let (c, t) = x.shape();
    if c == 0 || t < 2 {
        return Err(Error::Shape(format!("epoch is {c}x{t}; need at least one channel and two samples")));
    }
    if !shrinkage && t < c + 1 {
        return Err(Error::Shape(format!(
            "epoch has {t} samples for {c} channels; enable shrinkage for T < C + 1"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("epoch has non-finite samples".into()));
    }
    let mut cov = x * x.transpose() / (t - 1) as f64;
    if shrinkage {
        let ridge = SHRINKAGE * cov.trace() / c as f64;
        for i in 0..c {
            cov[(i, i)] += ridge;
        }
    }
    let eig = jacobi_eigen(&cov)?;
    let max = eig.max_eigenvalue();
    if max <= 0.0 || eig.min_eigenvalue() < EIGEN_FLOOR * max {
        return Err(Error::NotPositiveDefinite {
            min_eig: eig.min_eigenvalue(),
            floor: EIGEN_FLOOR * max.max(0.0),
        });
    }
    let s = c as f64 / cov.trace();
    Ok(SpdMatrix::new(cov * s)?)
}
