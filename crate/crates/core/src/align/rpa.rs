use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ra::robust_karcher;
use crate::data::{CovarianceSet, SubjectId};
use crate::error::{Error, Result};
use crate::spd::{congruence, jacobi_eigen, spd_exp, spd_log, spd_power, Mat, SpdMatrix, SymMatrix};

/// Ridge inside the log-scatter dispersion.
pub const DISPERSION_EPS: f64 = 1e-6;

/// How the per-subject dispersion matrix is formed from recentred items.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RpaDispersion {
    /// `exp(mean (Sᵢ − S̄)² + εI)` with `Sᵢ = log Cᵢ`.
    #[default]
    LogScatter,
    /// Euclidean mean of the recentred matrices.
    Mean,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RpaSubject {
    pub mean: SpdMatrix,
    pub dispersion: SpdMatrix,
    /// Eigenvectors of the dispersion, descending eigenvalue order.
    pub rotation: Mat,
    pub mean_isqrt: Mat,
    pub dispersion_isqrt: Mat,
}

impl RpaSubject {
    /// `Rᵀ Σ^{-1/2} μ^{-1/2} C μ^{-1/2} Σ^{-1/2} R`, applied as three congruences.
    pub fn apply(&self, c: &SpdMatrix) -> Result<SpdMatrix> {
        let recentred = congruence(c, &self.mean_isqrt)?;
        let stretched = congruence(&recentred, &self.dispersion_isqrt)?;
        congruence(&stretched, &self.rotation)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RpaModel {
    pub dispersion: RpaDispersion,
    pub subjects: BTreeMap<SubjectId, RpaSubject>,
}

fn fit_subject(covs: &[SpdMatrix], kind: RpaDispersion) -> Result<RpaSubject> {
    let mean = robust_karcher(covs)?;
    let mean_isqrt = spd_power(&mean, -0.5)?.into_mat();
    let recentred = covs
        .iter()
        .map(|c| congruence(c, &mean_isqrt))
        .collect::<Result<Vec<_>>>()?;
    let d = mean.dim();
    let dispersion = match kind {
        RpaDispersion::LogScatter => {
            let logs = recentred
                .iter()
                .map(|c| Ok(spd_log(c)?.into_mat()))
                .collect::<Result<Vec<_>>>()?;
            let centre = logs.iter().fold(Mat::zeros(d, d), |a, l| a + l) / logs.len() as f64;
            let mut scatter = Mat::zeros(d, d);
            for l in &logs {
                let dev = l - &centre;
                scatter += &dev * &dev;
            }
            scatter /= logs.len() as f64;
            for i in 0..d {
                scatter[(i, i)] += DISPERSION_EPS;
            }
            spd_exp(&SymMatrix::new(scatter)?)?
        }
        RpaDispersion::Mean => {
            let m = recentred.iter().fold(Mat::zeros(d, d), |a, c| a + c.as_mat()) / recentred.len() as f64;
            SpdMatrix::new(m)?
        }
    };
    let dispersion_isqrt = spd_power(&dispersion, -0.5)?.into_mat();
    let eig = jacobi_eigen(dispersion.as_mat())?;
    let mut rotation = Mat::zeros(d, d);
    for j in 0..d {
        rotation.set_column(j, &eig.eigenvectors.column(d - 1 - j));
    }
    Ok(RpaSubject {
        mean,
        dispersion,
        rotation,
        mean_isqrt,
        dispersion_isqrt,
    })
}

pub fn rpa_fit(ds: &CovarianceSet, kind: RpaDispersion) -> Result<RpaModel> {
    if ds.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut model = RpaModel {
        dispersion: kind,
        subjects: BTreeMap::new(),
    };
    model.fit_unseen(ds)?;
    Ok(model)
}

impl RpaModel {
    /// Fits subjects of `ds` not yet in the model (label-free).
    pub fn fit_unseen(&mut self, ds: &CovarianceSet) -> Result<Vec<SubjectId>> {
        let mut added = Vec::new();
        for s in ds.subjects() {
            if self.subjects.contains_key(&s) {
                continue;
            }
            let covs: Vec<SpdMatrix> = ds.indices_of(s).into_iter().map(|i| ds.items()[i].cov.clone()).collect();
            if covs.len() < 2 {
                return Err(Error::Training(format!("subject {s} needs at least two items for RPA")));
            }
            self.subjects.insert(s, fit_subject(&covs, self.dispersion)?);
            added.push(s);
        }
        Ok(added)
    }
}

pub fn rpa_apply(model: &RpaModel, ds: &CovarianceSet) -> Result<CovarianceSet> {
    let covs = ds
        .items()
        .iter()
        .map(|it| {
            model
                .subjects
                .get(&it.subject)
                .ok_or(Error::UnknownSubject(it.subject.0))?
                .apply(&it.cov)
        })
        .collect::<Result<Vec<_>>>()?;
    ds.with_covs(covs)
}

/// Per-subject recentre, stretch and rotate.
pub fn rpa_align(ds: &CovarianceSet, kind: RpaDispersion) -> Result<CovarianceSet> {
    rpa_apply(&rpa_fit(ds, kind)?, ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, CovItem, SynthConfig};
    use crate::spd::{airm_distance, mean_log};

    fn fixture() -> CovarianceSet {
        synth_generate(&SynthConfig {
            n_subjects: 2,
            trials_per_class: 4,
            ..SynthConfig::high_distortion(8)
        })
        .unwrap()
    }

    #[test]
    fn identity_items_stay_identity() {
        let items = (0..4)
            .map(|k| CovItem {
                subject: SubjectId(1),
                label: k % 2,
                cov: SpdMatrix::identity(3),
            })
            .collect();
        let ds = CovarianceSet::new(3, items).unwrap();
        for kind in [RpaDispersion::LogScatter, RpaDispersion::Mean] {
            for it in rpa_align(&ds, kind).unwrap().items() {
                // the log-scatter ridge leaves exp(εI) as dispersion
                let expect = match kind {
                    RpaDispersion::LogScatter => (-DISPERSION_EPS).exp(),
                    RpaDispersion::Mean => 1.0,
                };
                assert!((it.cov.as_mat() - Mat::identity(3, 3) * expect).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn recentred_mean_log_vanishes() {
        let ds = fixture();
        let model = rpa_fit(&ds, RpaDispersion::LogScatter).unwrap();
        for (s, sub) in &model.subjects {
            let rec: Vec<SpdMatrix> = ds
                .indices_of(*s)
                .into_iter()
                .map(|i| congruence(&ds.items()[i].cov, &sub.mean_isqrt).unwrap())
                .collect();
            assert!(mean_log(&rec).unwrap().amax() < 1e-6);
            let r = &sub.rotation;
            assert!((r.transpose() * r - Mat::identity(8, 8)).amax() < 1e-10);
        }
    }

    #[test]
    fn rotation_step_preserves_distances() {
        let ds = fixture();
        let model = rpa_fit(&ds, RpaDispersion::LogScatter).unwrap();
        let sub = &model.subjects[&SubjectId(1)];
        let a = &ds.items()[0].cov;
        let b = &ds.items()[5].cov;
        let before = airm_distance(a, b).unwrap();
        let after = airm_distance(&congruence(a, &sub.rotation).unwrap(), &congruence(b, &sub.rotation).unwrap()).unwrap();
        assert!((before - after).abs() < 1e-10 * before.max(1.0));
    }

    #[test]
    fn single_item_subject_is_rejected() {
        let ds = fixture();
        let one = ds.subset(&[0]);
        assert!(matches!(rpa_fit(&one, RpaDispersion::Mean), Err(Error::Training(_))));
    }
}
