use serde::{Deserialize, Serialize};

use super::common::{argmax, check_classes, TangentMap};
use crate::data::CovarianceSet;
use crate::error::{Error, Result};
use crate::spd::{log_euclidean_mean, Mat, SpdMatrix};

/// Shrinkage weight ρ in `(1−ρ)Σ + ρ(tr Σ / p) I`.
pub const LDA_SHRINKAGE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdaConfig {
    pub shrinkage: f64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self { shrinkage: LDA_SHRINKAGE }
    }
}

/// Shared-covariance Gaussian discriminant
/// `δ_k(x) = xᵀΣ⁻¹μ_k − ½μ_kᵀΣ⁻¹μ_k + log π_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct LdaModel {
    /// `K × p` class means.
    pub means: Mat,
    pub sigma: Mat,
    pub log_priors: Vec<f64>,
    /// Rows `(Σ⁻¹μ_k)ᵀ`.
    pub coef: Mat,
    pub intercept: Vec<f64>,
}

impl LdaModel {
    /// Builds the discriminant from explicit parameters (no shrinkage).
    pub fn from_parts(means: Mat, sigma: Mat, priors: &[f64]) -> Result<Self> {
        let (k, p) = means.shape();
        if sigma.shape() != (p, p) || priors.len() != k {
            return Err(Error::Shape(format!(
                "LDA parts: means {k}x{p}, sigma {:?}, {} priors",
                sigma.shape(),
                priors.len()
            )));
        }
        if priors.iter().any(|&q| !(q > 0.0)) {
            return Err(Error::Config("class priors must be positive".into()));
        }
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("LDA covariance is not positive definite".into()))?;
        let coef = chol.solve(&means.transpose()).transpose();
        let log_priors: Vec<f64> = priors.iter().map(|q| q.ln()).collect();
        let intercept = (0..k)
            .map(|c| -0.5 * coef.row(c).dot(&means.row(c)) + log_priors[c])
            .collect();
        Ok(Self {
            means,
            sigma,
            log_priors,
            coef,
            intercept,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.means.nrows()
    }

    pub fn discriminants(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.means.ncols() {
            return Err(Error::Shape(format!(
                "LDA expects {} features, got {}",
                self.means.ncols(),
                x.len()
            )));
        }
        Ok((0..self.n_classes())
            .map(|c| self.coef.row(c).iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.intercept[c])
            .collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.discriminants(x)?))
    }
}

/// Pooled within-class covariance (divided by `N − K`), shrunk toward a scaled identity,
/// with empirical priors.
pub fn lda_fit(features: &[Vec<f64>], labels: &[usize], shrinkage: f64) -> Result<LdaModel> {
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(Error::Config(format!("LDA shrinkage {shrinkage} outside [0, 1]")));
    }
    if features.len() != labels.len() {
        return Err(Error::Shape("one label per feature vector".into()));
    }
    let k = check_classes(labels, 2)?;
    let p = features[0].len();
    let n = features.len();
    let mut means = Mat::zeros(k, p);
    let mut counts = vec![0usize; k];
    for (x, &y) in features.iter().zip(labels) {
        counts[y] += 1;
        for j in 0..p {
            means[(y, j)] += x[j];
        }
    }
    for c in 0..k {
        means.row_mut(c).scale_mut(1.0 / counts[c] as f64);
    }
    let mut sigma = Mat::zeros(p, p);
    for (x, &y) in features.iter().zip(labels) {
        let d = Mat::from_fn(p, 1, |j, _| x[j] - means[(y, j)]);
        sigma += &d * d.transpose();
    }
    sigma /= (n - k).max(1) as f64;
    let mu = sigma.trace() / p as f64;
    sigma *= 1.0 - shrinkage;
    for j in 0..p {
        sigma[(j, j)] += shrinkage * mu;
    }
    let priors: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    LdaModel::from_parts(means, sigma, &priors)
}

/// LDA on tangent vectors at the training log-Euclidean mean.
#[derive(Clone, Debug, PartialEq)]
pub struct TsaLdaModel {
    pub tangent: TangentMap,
    pub lda: LdaModel,
}

pub fn tsa_lda_fit(ds: &CovarianceSet, cfg: &LdaConfig) -> Result<TsaLdaModel> {
    if ds.is_empty() {
        return Err(Error::EmptyInput);
    }
    let tangent = TangentMap::new(log_euclidean_mean(&ds.covs())?)?;
    let features = tangent.features_of(ds)?;
    let lda = lda_fit(&features, &ds.labels(), cfg.shrinkage)?;
    Ok(TsaLdaModel { tangent, lda })
}

impl TsaLdaModel {
    pub fn predict(&self, c: &SpdMatrix) -> Result<usize> {
        self.lda.predict(&self.tangent.features(c)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthConfig};
    use proptest::prelude::*;

    fn symmetric(mu: [f64; 2], priors: [f64; 2]) -> LdaModel {
        let means = Mat::from_row_slice(2, 2, &[-mu[0], -mu[1], mu[0], mu[1]]);
        LdaModel::from_parts(means, Mat::identity(2, 2), &priors).unwrap()
    }

    proptest! {
        #[test]
        fn symmetric_case_splits_on_hyperplane(x in proptest::collection::vec(-5.0f64..5.0, 2)) {
            let m = symmetric([1.0, 0.5], [0.5, 0.5]);
            let d = m.discriminants(&x).unwrap();
            let side = x[0] * 1.0 + x[1] * 0.5;
            prop_assert!(((d[1] - d[0]) - 2.0 * side).abs() < 1e-12);
        }
    }

    #[test]
    fn skewed_priors_move_the_boundary() {
        let x = [0.1, 0.0];
        assert_eq!(symmetric([1.0, 0.0], [0.5, 0.5]).predict(&x).unwrap(), 1);
        assert_eq!(symmetric([1.0, 0.0], [0.9, 0.1]).predict(&x).unwrap(), 0);
    }

    #[test]
    fn recovers_separated_synthetic_labels() {
        let ds = synth_generate(&SynthConfig {
            n_subjects: 1,
            rotation_scale: 0.0,
            dispersion_range: 0.0,
            ..SynthConfig::low_distortion(3)
        })
        .unwrap();
        let m = tsa_lda_fit(&ds, &LdaConfig::default()).unwrap();
        let hits = ds.items().iter().filter(|it| m.predict(&it.cov).unwrap() == it.label).count();
        assert!(hits as f64 >= 0.95 * ds.len() as f64, "{hits}/{}", ds.len());
    }

    #[test]
    fn singleton_class_is_rejected() {
        let f = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(matches!(lda_fit(&f, &[0, 0, 1], 0.05), Err(Error::Training(_))));
    }
}
