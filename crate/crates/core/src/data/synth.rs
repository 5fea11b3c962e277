use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{trace_normalize, CovItem, CovarianceSet, SubjectId};
use crate::error::{Error, Result};
use crate::sampling::{gaussian, random_sym};
use crate::spd::{congruence_mat, spd_exp, Mat, SpdMatrix, SymMatrix};

/// Parameters of the synthetic cross-subject generator.
///
/// Class `k` has prototype `P_k = exp(class_spread·S_k)`. Subject `s` distorts
/// every trial by `G_s = R_s·diag(exp(u_s))` where `R_s = exp(rotation_scale·K_s)`
/// for a random skew `K_s` and `u_s` is uniform in `±dispersion_range`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub dim: usize,
    pub n_subjects: usize,
    pub n_classes: usize,
    pub trials_per_class: usize,
    pub class_spread: f64,
    pub rotation_scale: f64,
    pub dispersion_range: f64,
    pub noise: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// Mild subject shift: 6 subjects, 4 classes, dim 8, 40 trials per class.
    pub fn low_distortion(seed: u64) -> Self {
        Self {
            dim: 8,
            n_subjects: 6,
            n_classes: 4,
            trials_per_class: 40,
            class_spread: 0.6,
            rotation_scale: 0.1,
            dispersion_range: 0.2,
            noise: 0.1,
            seed,
        }
    }

    /// Same layout with strong subject rotation and dispersion.
    pub fn high_distortion(seed: u64) -> Self {
        Self {
            rotation_scale: 0.35,
            dispersion_range: 0.8,
            noise: 0.2,
            ..Self::low_distortion(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.n_subjects == 0 || self.n_classes == 0 || self.trials_per_class == 0 {
            return Err(Error::Config("synthetic sizes must be positive".into()));
        }
        if self.n_classes > super::MAX_CLASSES {
            return Err(Error::Config(format!("at most {} classes", super::MAX_CLASSES)));
        }
        let scales = [self.class_spread, self.rotation_scale, self.dispersion_range, self.noise];
        if scales.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::Config("synthetic scales must be finite and non-negative".into()));
        }
        Ok(())
    }
}

fn random_rotation(rng: &mut ChaCha8Rng, dim: usize, angle: f64) -> Mat {
    let g = gaussian(rng, dim, dim);
    let skew = (&g - g.transpose()) * (angle / std::f64::consts::SQRT_2);
    skew.exp()
}

/// Generates subjects `1..=n_subjects`, trials grouped by subject then class.
pub fn synth_generate(cfg: &SynthConfig) -> Result<CovarianceSet> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.dim;
    let proto_logs: Vec<SymMatrix> = (0..cfg.n_classes)
        .map(|_| random_sym(&mut rng, d, 1.0).scale(cfg.class_spread))
        .collect();

    let mut items = Vec::with_capacity(cfg.n_subjects * cfg.n_classes * cfg.trials_per_class);
    for s in 0..cfg.n_subjects {
        let rotation = random_rotation(&mut rng, d, cfg.rotation_scale);
        let scales: Vec<f64> = (0..d)
            .map(|_| (cfg.dispersion_range * rng.random_range(-1.0..=1.0f64)).exp())
            .collect();
        let mut distortion = rotation;
        for (j, sc) in scales.iter().enumerate() {
            distortion.column_mut(j).scale_mut(*sc);
        }
        let distortion_t = distortion.transpose();
        for (k, log_p) in proto_logs.iter().enumerate() {
            for _ in 0..cfg.trials_per_class {
                let noise = random_sym(&mut rng, d, cfg.noise);
                let trial_log = SymMatrix::new(log_p.as_mat() + noise.as_mat())?;
                let trial = spd_exp(&trial_log)?;
                let warped = SpdMatrix::new(congruence_mat(trial.as_mat(), &distortion_t))?;
                items.push(CovItem {
                    subject: SubjectId(s as u32 + 1),
                    label: k,
                    cov: trace_normalize(&warped),
                });
            }
        }
    }
    CovarianceSet::new(d, items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spd::airm_distance;

    fn clean() -> SynthConfig {
        SynthConfig {
            rotation_scale: 0.0,
            dispersion_range: 0.0,
            noise: 0.0,
            trials_per_class: 3,
            n_subjects: 2,
            ..SynthConfig::low_distortion(5)
        }
    }

    #[test]
    fn clean_trials_equal_their_prototype() {
        let ds = synth_generate(&clean()).unwrap();
        for k in 0..4 {
            let class: Vec<_> = ds.items().iter().filter(|i| i.label == k).collect();
            for it in &class[1..] {
                assert!(airm_distance(&it.cov, &class[0].cov).unwrap() < 1e-10);
            }
        }
        let a = &ds.items()[0].cov;
        let b = ds.items().iter().find(|i| i.label == 1).unwrap();
        assert!(airm_distance(a, &b.cov).unwrap() > 0.1);
    }

    #[test]
    fn seed_fixes_output() {
        let cfg = SynthConfig::high_distortion(11);
        assert_eq!(synth_generate(&cfg).unwrap(), synth_generate(&cfg).unwrap());
        let other = synth_generate(&SynthConfig::high_distortion(12)).unwrap();
        assert_ne!(synth_generate(&cfg).unwrap(), other);
    }

    #[test]
    fn rotation_separates_subject_class_means() {
        let cfg = SynthConfig {
            rotation_scale: 0.35,
            ..clean()
        };
        let ds = synth_generate(&cfg).unwrap();
        let first = |s: u32| {
            ds.items()
                .iter()
                .find(|i| i.subject == SubjectId(s) && i.label == 0)
                .unwrap()
                .cov
                .clone()
        };
        assert!(airm_distance(&first(1), &first(2)).unwrap() > 1e-3);
    }

    #[test]
    fn negative_scale_is_rejected() {
        let cfg = SynthConfig {
            noise: -1.0,
            ..clean()
        };
        assert!(matches!(synth_generate(&cfg), Err(Error::Config(_))));
    }
}
