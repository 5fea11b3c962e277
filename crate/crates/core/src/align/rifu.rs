use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Shape, Tape, Var};
use crate::data::CovarianceSet;
use crate::error::{Error, Result};
use crate::nets::{dense_groups, eigen_basis, train, TrainConfig, TrainTrace, UNet, UNetVars, WeightInit};
use crate::spd::{spd_log, vec_upper_mat, Mat, SpdMatrix};

/// Default U-Net depths for input dimension `d`: `[d, round(8d/11), round(4d/11)]`
/// (22 → 16 → 8).
pub fn default_unet_dims(d: usize) -> Vec<usize> {
    let scaled = |num: usize| (((num * d) as f64 / 11.0).round() as usize).max(1);
    vec![d, scaled(8), scaled(4)]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RifuConfig {
    /// Empty selects [`default_unet_dims`].
    pub dims: Vec<usize>,
    pub init: WeightInit,
    pub lambda_w: f64,
    pub lambda_bet: f64,
    pub lambda_sub: f64,
    pub lambda_rec: f64,
    pub train: TrainConfig,
}

impl Default for RifuConfig {
    fn default() -> Self {
        Self {
            dims: Vec::new(),
            init: WeightInit::Eigen,
            lambda_w: 1.0,
            lambda_bet: 1.0,
            lambda_sub: 0.5,
            lambda_rec: 0.1,
            train: TrainConfig::default(),
        }
    }
}

impl RifuConfig {
    pub fn dims_for(&self, d: usize) -> Result<Vec<usize>> {
        if self.dims.is_empty() {
            return Ok(default_unet_dims(d));
        }
        if self.dims[0] != d {
            return Err(Error::Shape(format!("U-Net input dim {} but data dim {d}", self.dims[0])));
        }
        Ok(self.dims.clone())
    }

    fn validate(&self) -> Result<()> {
        let w = [self.lambda_w, self.lambda_bet, self.lambda_sub, self.lambda_rec];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Config("RiFU loss weights must be non-negative".into()));
        }
        self.train.validate()
    }
}

/// Trained SPD U-Net pre-aligner.
#[derive(Clone, Debug, PartialEq)]
pub struct RifuModel {
    pub net: UNet,
    pub config: RifuConfig,
}

#[derive(Clone, Debug)]
pub struct RifuFit {
    pub model: RifuModel,
    pub trace: TrainTrace,
}

/// One minibatch of the pre-aligner objective
/// `λ_w W(A) − λ_bet B(A) − λ_sub W(S) + λ_rec Rec` on log features.
#[allow(clippy::too_many_arguments)]
pub fn rifu_loss(
    tape: &mut Tape,
    net: &UNet,
    w: &UNetVars,
    covs: &[&SpdMatrix],
    input_features: &[&[f64]],
    actions: &[usize],
    subjects: &[usize],
    cfg: &RifuConfig,
) -> Result<Var> {
    let n = covs.len() as f64;
    let mut rows = Vec::with_capacity(covs.len());
    for c in covs {
        let x = tape.leaf(c.as_mat().clone(), Shape::Sym(c.dim()));
        let out = net.forward(tape, w, x)?;
        let l = tape.log(out)?;
        rows.push(tape.vec_upper(l));
    }
    let z = tape.stack_rows(&rows);
    let p = input_features[0].len();
    let zin = Mat::from_fn(covs.len(), p, |i, j| input_features[i][j]);
    let zin = tape.input(zin);
    let diff = tape.sub(z, zin);
    let rec = tape.frob_sq(diff);
    let rec = tape.scale(rec, cfg.lambda_rec / n);

    let wa = tape.within_scatter(z, actions);
    let wa = tape.scale(wa, cfg.lambda_w);
    let ba = tape.between_scatter(z, actions);
    let ba = tape.scale(ba, -cfg.lambda_bet);
    let ws = tape.within_scatter(z, subjects);
    let ws = tape.scale(ws, -cfg.lambda_sub);

    let s = tape.add(wa, ba);
    let s = tape.add(s, ws);
    Ok(tape.add(s, rec))
}

/// Trains on an RA-whitened set with action and subject labels.
pub fn rifu_fit(ds: &CovarianceSet, cfg: &RifuConfig) -> Result<RifuFit> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyInput);
    }
    let dims = cfg.dims_for(ds.dim())?;
    let covs = ds.covs();
    let basis = eigen_basis(&covs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let mut net = UNet::new(&dims, cfg.init, &basis, &mut rng)?;
    let feats = covs
        .iter()
        .map(|c| Ok(vec_upper_mat(spd_log(c)?.as_mat())))
        .collect::<Result<Vec<_>>>()?;
    let actions = ds.labels();
    let subjects = dense_groups(&ds.subject_ids());

    let mut params = net.params();
    let trace = train(&mut params, &cfg.train, covs.len(), |tape, vars, batch, _| {
        let w = net.vars_from(vars);
        let bc: Vec<&SpdMatrix> = batch.iter().map(|&i| &covs[i]).collect();
        let bf: Vec<&[f64]> = batch.iter().map(|&i| feats[i].as_slice()).collect();
        let ba: Vec<usize> = batch.iter().map(|&i| actions[i]).collect();
        let bs: Vec<usize> = batch.iter().map(|&i| subjects[i]).collect();
        rifu_loss(tape, &net, &w, &bc, &bf, &ba, &bs, cfg)
    })?;
    net.set_params(&params);
    Ok(RifuFit {
        model: RifuModel {
            net,
            config: RifuConfig { dims, ..cfg.clone() },
        },
        trace,
    })
}

pub fn rifu_apply(model: &RifuModel, ds: &CovarianceSet) -> Result<CovarianceSet> {
    let covs = ds
        .items()
        .iter()
        .map(|it| model.net.apply(&it.cov))
        .collect::<Result<Vec<_>>>()?;
    ds.with_covs(covs)
}
