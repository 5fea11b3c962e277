use serde::{Deserialize, Serialize};

use super::common::{argmax, check_classes, softmax, TangentMap};
use crate::autodiff::Param;
use crate::data::CovarianceSet;
use crate::error::{Error, Result};
use crate::nets::{train, TrainConfig, TrainTrace};
use crate::spd::{log_euclidean_mean, Mat, SpdMatrix};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TslrConfig {
    pub train: TrainConfig,
}

/// Multinomial logistic regression on tangent vectors at the training log-Euclidean mean.
#[derive(Clone, Debug, PartialEq)]
pub struct TslrModel {
    pub tangent: TangentMap,
    /// `K × p`.
    pub weights: Mat,
    /// `K × 1`.
    pub bias: Mat,
}

/// Softmax regression `softmax(W z + b)` trained with Adam on cross-entropy.
pub(crate) fn fit_softmax(
    features: &[Vec<f64>],
    labels: &[usize],
    k: usize,
    cfg: &TrainConfig,
) -> Result<(Mat, Mat, TrainTrace)> {
    let p = features.first().ok_or(Error::EmptyInput)?.len();
    let mut params = vec![Param::new("weights", Mat::zeros(k, p)), Param::new("bias", Mat::zeros(k, 1))];
    let trace = train(&mut params, cfg, features.len(), |tape, vars, batch, _| {
        let x = Mat::from_fn(batch.len(), p, |i, j| features[batch[i]][j]);
        let x = tape.input(x);
        let logits = tape.linear(x, vars[0], vars[1]);
        let logp = tape.log_softmax(logits);
        let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
        Ok(tape.cross_entropy(logp, &y))
    })?;
    let bias = params.pop().expect("two params").value;
    let weights = params.pop().expect("two params").value;
    Ok((weights, bias, trace))
}

pub(crate) fn logits(weights: &Mat, bias: &Mat, z: &[f64]) -> Vec<f64> {
    (0..weights.nrows())
        .map(|k| weights.row(k).iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + bias[(k, 0)])
        .collect()
}

pub fn tslr_fit(ds: &CovarianceSet, cfg: &TslrConfig) -> Result<(TslrModel, TrainTrace)> {
    let labels = ds.labels();
    let k = check_classes(&labels, 1)?;
    let tangent = TangentMap::new(log_euclidean_mean(&ds.covs())?)?;
    let features = tangent.features_of(ds)?;
    let (weights, bias, trace) = fit_softmax(&features, &labels, k, &cfg.train)?;
    Ok((TslrModel { tangent, weights, bias }, trace))
}

impl TslrModel {
    pub fn n_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn probabilities(&self, c: &SpdMatrix) -> Result<Vec<f64>> {
        let z = self.tangent.features(c)?;
        Ok(softmax(&logits(&self.weights, &self.bias, &z)))
    }

    pub fn predict(&self, c: &SpdMatrix) -> Result<(usize, Vec<f64>)> {
        let p = self.probabilities(c)?;
        Ok((argmax(&p), p))
    }
}
