use serde::{Deserialize, Serialize};

use super::common::{argmin, check_classes};
use crate::data::CovarianceSet;
use crate::error::{Error, Result};
use crate::spd::{airm_distance, karcher_mean, SpdMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdmConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MdmConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200 }
    }
}

/// Nearest AIRM class prototype.
#[derive(Clone, Debug, PartialEq)]
pub struct MdmModel {
    pub prototypes: Vec<SpdMatrix>,
}

pub fn mdm_fit(ds: &CovarianceSet, cfg: &MdmConfig) -> Result<MdmModel> {
    let k = check_classes(&ds.labels(), 1)?;
    let mut prototypes = Vec::with_capacity(k);
    for class in 0..k {
        let covs: Vec<SpdMatrix> = ds
            .items()
            .iter()
            .filter(|it| it.label == class)
            .map(|it| it.cov.clone())
            .collect();
        let proto = match karcher_mean(&covs, cfg.tol, cfg.max_iter) {
            Ok(m) => m,
            Err(Error::KarcherNotConverged { iterate, grad_norm, .. }) => {
                log::warn!("class {class} prototype stopped at gradient norm {grad_norm:e}");
                *iterate
            }
            Err(e) => return Err(e),
        };
        prototypes.push(proto);
    }
    Ok(MdmModel { prototypes })
}

impl MdmModel {
    pub fn distances(&self, c: &SpdMatrix) -> Result<Vec<f64>> {
        self.prototypes.iter().map(|p| airm_distance(c, p)).collect()
    }

    pub fn predict(&self, c: &SpdMatrix) -> Result<usize> {
        Ok(argmin(&self.distances(c)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CovItem, SubjectId};
    use crate::sampling::{random_full_rank, random_spd};
    use crate::spd::congruence;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::E;

    fn model(protos: Vec<SpdMatrix>) -> MdmModel {
        MdmModel { prototypes: protos }
    }

    #[test]
    fn nearer_diagonal_prototype_wins() {
        let m = model(vec![SpdMatrix::from_diagonal(&[E, 1.0]), SpdMatrix::from_diagonal(&[1.0, E])]);
        assert_eq!(m.predict(&SpdMatrix::from_diagonal(&[E.powf(0.9), 1.0])).unwrap(), 0);
        assert_eq!(m.predict(&m.prototypes[1].clone()).unwrap(), 1);
    }

    #[test]
    fn equidistant_query_goes_to_lowest_class() {
        let m = model(vec![SpdMatrix::from_diagonal(&[E, 1.0]), SpdMatrix::from_diagonal(&[1.0, E])]);
        assert_eq!(m.predict(&SpdMatrix::identity(2)).unwrap(), 0);
    }

    #[test]
    fn fit_recovers_constant_classes() {
        let a = SpdMatrix::from_diagonal(&[2.0, 1.0, 1.0]);
        let b = SpdMatrix::from_diagonal(&[1.0, 1.0, 3.0]);
        let items = (0..6)
            .map(|i| CovItem {
                subject: SubjectId(1),
                label: i % 2,
                cov: if i % 2 == 0 { a.clone() } else { b.clone() },
            })
            .collect();
        let m = mdm_fit(&CovarianceSet::new(3, items).unwrap(), &MdmConfig::default()).unwrap();
        assert!((m.prototypes[0].as_mat() - a.as_mat()).amax() < 1e-10);
        assert!((m.prototypes[1].as_mat() - b.as_mat()).amax() < 1e-10);
    }

    #[test]
    fn prediction_is_congruence_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let protos: Vec<SpdMatrix> = (0..3).map(|_| random_spd(&mut rng, 4, 20.0)).collect();
            let q = random_spd(&mut rng, 4, 20.0);
            let w = random_full_rank(&mut rng, 4, 4);
            let moved = model(protos.iter().map(|p| congruence(p, &w).unwrap()).collect());
            let before = model(protos).predict(&q).unwrap();
            assert_eq!(moved.predict(&congruence(&q, &w).unwrap()).unwrap(), before);
        }
    }
}
