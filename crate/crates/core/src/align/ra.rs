use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{CovarianceSet, SubjectId};
use crate::error::{Error, Result};
use crate::spd::{congruence, karcher_mean, log_euclidean_mean, spd_power, Mat, SpdMatrix};

const KARCHER_TOL: f64 = 1e-10;
const KARCHER_MAX_ITER: usize = 200;

/// Which items a reference is estimated from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RaScope {
    /// One reference per subject from that subject's own (unlabelled) items.
    #[default]
    Subject,
    /// A single reference from all training items.
    TrainGlobal,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceMean {
    #[default]
    LogEuclidean,
    Karcher,
}

impl ReferenceMean {
    pub fn compute(self, covs: &[SpdMatrix]) -> Result<SpdMatrix> {
        match self {
            ReferenceMean::LogEuclidean => log_euclidean_mean(covs),
            ReferenceMean::Karcher => robust_karcher(covs),
        }
    }
}

/// Karcher mean, falling back to the last iterate when the tolerance is not reached.
pub(crate) fn robust_karcher(covs: &[SpdMatrix]) -> Result<SpdMatrix> {
    match karcher_mean(covs, KARCHER_TOL, KARCHER_MAX_ITER) {
        Err(Error::KarcherNotConverged { iterate, grad_norm, .. }) => {
            log::warn!("Karcher mean stopped at gradient norm {grad_norm:e}; using last iterate");
            Ok(*iterate)
        }
        other => other,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    pub reference: SpdMatrix,
    /// `reference^{-1/2}`.
    pub whitener: Mat,
}

impl Reference {
    pub fn new(reference: SpdMatrix) -> Result<Self> {
        let whitener = spd_power(&reference, -0.5)?.into_mat();
        Ok(Self { reference, whitener })
    }

    pub fn whiten(&self, c: &SpdMatrix) -> Result<SpdMatrix> {
        congruence(c, &self.whitener)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RaModel {
    pub scope: RaScope,
    pub mean: ReferenceMean,
    pub references: BTreeMap<SubjectId, Reference>,
    pub global: Option<Reference>,
}

fn subject_reference(ds: &CovarianceSet, s: SubjectId, mean: ReferenceMean) -> Result<Reference> {
    let covs: Vec<SpdMatrix> = ds.indices_of(s).into_iter().map(|i| ds.items()[i].cov.clone()).collect();
    Reference::new(mean.compute(&covs)?)
}

pub fn ra_fit(ds: &CovarianceSet, scope: RaScope, mean: ReferenceMean) -> Result<RaModel> {
    if ds.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut model = RaModel {
        scope,
        mean,
        references: BTreeMap::new(),
        global: None,
    };
    match scope {
        RaScope::Subject => {
            model.fit_unseen(ds)?;
        }
        RaScope::TrainGlobal => model.global = Some(Reference::new(mean.compute(&ds.covs())?)?),
    }
    Ok(model)
}

impl RaModel {
    /// Adds references for subjects of `ds` the model has not seen (label-free).
    /// Returns the subjects added; a global-scope model never changes.
    pub fn fit_unseen(&mut self, ds: &CovarianceSet) -> Result<Vec<SubjectId>> {
        if self.scope == RaScope::TrainGlobal {
            return Ok(Vec::new());
        }
        let mut added = Vec::new();
        for s in ds.subjects() {
            if !self.references.contains_key(&s) {
                let r = subject_reference(ds, s, self.mean)?;
                self.references.insert(s, r);
                added.push(s);
            }
        }
        Ok(added)
    }

    pub fn reference_for(&self, s: SubjectId) -> Result<&Reference> {
        match &self.global {
            Some(g) => Ok(g),
            None => self.references.get(&s).ok_or(Error::UnknownSubject(s.0)),
        }
    }
}

pub fn ra_apply(model: &RaModel, ds: &CovarianceSet) -> Result<CovarianceSet> {
    let covs = ds
        .items()
        .iter()
        .map(|it| model.reference_for(it.subject)?.whiten(&it.cov))
        .collect::<Result<Vec<_>>>()?;
    ds.with_covs(covs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, CovItem, SynthConfig};
    use crate::sampling::random_spd;
    use crate::spd::congruence_mat;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fixture() -> CovarianceSet {
        synth_generate(&SynthConfig {
            n_subjects: 3,
            trials_per_class: 5,
            ..SynthConfig::high_distortion(2)
        })
        .unwrap()
    }

    #[test]
    fn constant_subjects_map_to_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let items = (0..3)
            .flat_map(|s| {
                let m = random_spd(&mut rng, 4, 50.0);
                (0..4).map(move |k| CovItem {
                    subject: SubjectId(s),
                    label: k % 2,
                    cov: m.clone(),
                })
            })
            .collect();
        let ds = CovarianceSet::new(4, items).unwrap();
        let out = ra_apply(&ra_fit(&ds, RaScope::Subject, ReferenceMean::LogEuclidean).unwrap(), &ds).unwrap();
        for it in out.items() {
            assert!((it.cov.as_mat() - Mat::identity(4, 4)).amax() < 1e-8);
        }
    }

    #[test]
    fn references_whiten_to_identity() {
        let ds = fixture();
        for mean in [ReferenceMean::LogEuclidean, ReferenceMean::Karcher] {
            let m = ra_fit(&ds, RaScope::Subject, mean).unwrap();
            for r in m.references.values() {
                let w = congruence_mat(r.reference.as_mat(), &r.whitener);
                assert!((w - Mat::identity(8, 8)).amax() < 1e-8);
            }
        }
    }

    #[test]
    fn karcher_reference_is_idempotent() {
        let ds = fixture();
        let once = ra_apply(&ra_fit(&ds, RaScope::Subject, ReferenceMean::Karcher).unwrap(), &ds).unwrap();
        let twice = ra_apply(&ra_fit(&once, RaScope::Subject, ReferenceMean::Karcher).unwrap(), &once).unwrap();
        for (a, b) in once.items().iter().zip(twice.items()) {
            assert!((a.cov.as_mat() - b.cov.as_mat()).amax() < 1e-8);
        }
    }

    #[test]
    fn unseen_subject_is_an_error_until_fitted() {
        let ds = fixture();
        let train = ds.subset(&ds.indices_of(SubjectId(1)));
        let test = ds.subset(&ds.indices_of(SubjectId(2)));
        let mut m = ra_fit(&train, RaScope::Subject, ReferenceMean::LogEuclidean).unwrap();
        assert!(matches!(ra_apply(&m, &test), Err(Error::UnknownSubject(2))));
        assert_eq!(m.fit_unseen(&test).unwrap(), vec![SubjectId(2)]);
        assert!(ra_apply(&m, &test).is_ok());
    }

    #[test]
    fn global_scope_uses_one_reference() {
        let ds = fixture();
        let mut m = ra_fit(&ds, RaScope::TrainGlobal, ReferenceMean::LogEuclidean).unwrap();
        assert!(m.references.is_empty());
        assert!(m.fit_unseen(&ds).unwrap().is_empty());
        assert!(ra_apply(&m, &ds).is_ok());
    }
}
