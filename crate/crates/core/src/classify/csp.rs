use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::lda::{lda_fit, LdaModel, LDA_SHRINKAGE};
use crate::data::{CovarianceSet, EpochSet, SubjectId};
use crate::error::{Error, Result};
use crate::spd::{congruence, jacobi_eigen, spd_power, Mat, SpdMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CspConfig {
    /// Filters per class pairing (even).
    pub filters: usize,
    /// Per-subject channel standardization before filtering.
    pub z_score: bool,
    pub shrinkage: f64,
}

impl Default for CspConfig {
    fn default() -> Self {
        Self {
            filters: 8,
            z_score: false,
            shrinkage: LDA_SHRINKAGE,
        }
    }
}

/// One-vs-rest CSP filters followed by LDA on log-variances.
#[derive(Clone, Debug, PartialEq)]
pub struct CspModel {
    /// `C × F`, one filter per column, grouped by pairing.
    pub filters: Mat,
    pub z_score: bool,
    pub lda: LdaModel,
}

/// `D_s^{-1/2} C D_s^{-1/2}` with `D_s` the diagonal of subject `s`'s mean covariance.
/// Uses no labels.
pub fn standardize_channels(ds: &CovarianceSet) -> Result<CovarianceSet> {
    let d = ds.dim();
    let mut scales: BTreeMap<SubjectId, Mat> = BTreeMap::new();
    for s in ds.subjects() {
        let idx = ds.indices_of(s);
        let mut diag = vec![0.0; d];
        for &i in &idx {
            for (j, v) in diag.iter_mut().enumerate() {
                *v += ds.items()[i].cov.as_mat()[(j, j)];
            }
        }
        let scale = Mat::from_fn(d, d, |i, j| {
            if i == j {
                (diag[i] / idx.len() as f64).sqrt().recip()
            } else {
                0.0
            }
        });
        scales.insert(s, scale);
    }
    let covs = ds
        .items()
        .iter()
        .map(|it| congruence(&it.cov, &scales[&it.subject]))
        .collect::<Result<Vec<_>>>()?;
    ds.with_covs(covs)
}

/// Filters solving `C_k w = λ C_{−k} w` via whitening by `C_t = C_k + C_{−k}`;
/// the `m/2` largest and `m/2` smallest ratios per pairing, largest first.
/// Two classes use a single pairing.
pub fn csp_filters(class_covs: &[Mat], m: usize) -> Result<Mat> {
    let k = class_covs.len();
    if k < 2 {
        return Err(Error::Training("CSP needs at least two classes".into()));
    }
    let c = class_covs[0].nrows();
    if m == 0 || m % 2 != 0 || m > c {
        return Err(Error::Config(format!("CSP filter count {m} must be even and at most {c}")));
    }
    let total = class_covs.iter().fold(Mat::zeros(c, c), |a, b| a + b);
    let total = SpdMatrix::new(total)?;
    let whitener = spd_power(&total, -0.5)?.into_mat();
    let pairings = if k == 2 { 1 } else { k };
    let mut out = Mat::zeros(c, m * pairings);
    for (p, ck) in class_covs.iter().take(pairings).enumerate() {
        let eig = jacobi_eigen(&(&whitener * ck * &whitener))?;
        let half = m / 2;
        let picks = (0..half).map(|j| c - 1 - j).chain(0..half);
        for (slot, col) in picks.enumerate() {
            let w = &whitener * eig.eigenvectors.column(col);
            out.set_column(p * m + slot, &w);
        }
    }
    Ok(out)
}

fn log_variances(filters: &Mat, c: &SpdMatrix) -> Vec<f64> {
    (0..filters.ncols())
        .map(|j| {
            let w = filters.column(j);
            (w.transpose() * c.as_mat() * w)[(0, 0)].max(f64::MIN_POSITIVE).ln()
        })
        .collect()
}

pub fn csp_fit(ds: &CovarianceSet, cfg: &CspConfig) -> Result<CspModel> {
    let ds = if cfg.z_score { standardize_channels(ds)? } else { ds.clone() };
    let labels = ds.labels();
    let k = super::common::check_classes(&labels, 1)?;
    let d = ds.dim();
    let mut class_covs = vec![Mat::zeros(d, d); k];
    let mut counts = vec![0usize; k];
    for it in ds.items() {
        class_covs[it.label] += it.cov.as_mat();
        counts[it.label] += 1;
    }
    for (m, n) in class_covs.iter_mut().zip(&counts) {
        *m /= *n as f64;
    }
    let filters = csp_filters(&class_covs, cfg.filters)?;
    let features: Vec<Vec<f64>> = ds.items().iter().map(|it| log_variances(&filters, &it.cov)).collect();
    let lda = lda_fit(&features, &labels, cfg.shrinkage)?;
    Ok(CspModel {
        filters,
        z_score: cfg.z_score,
        lda,
    })
}

/// Epoch-level entry point: covariances without shrinkage, then [`csp_fit`].
pub fn csp_fit_epochs(es: &EpochSet, cfg: &CspConfig) -> Result<CspModel> {
    csp_fit(&es.covariances(false)?, cfg)
}

impl CspModel {
    /// Predicts a whole set (the standardized variant needs per-subject channel scales).
    pub fn predict_set(&self, ds: &CovarianceSet) -> Result<Vec<usize>> {
        let ds = if self.z_score { standardize_channels(ds)? } else { ds.clone() };
        ds.items()
            .iter()
            .map(|it| self.lda.predict(&log_variances(&self.filters, &it.cov)))
            .collect()
    }

    pub fn predict_epochs(&self, es: &EpochSet) -> Result<Vec<usize>> {
        self.predict_set(&es.covariances(false)?)
    }
}
