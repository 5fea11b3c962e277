use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::common::{argmax, check_classes, fisher_penalty, softmax};
use crate::align::default_unet_dims;
use crate::autodiff::{Param, Shape, Tape, Var};
use crate::data::CovarianceSet;
use crate::error::{Error, Result};
use crate::nets::{dense_groups, eigen_basis, train, TrainConfig, TrainTrace, UNet, UNetVars, WeightInit};
use crate::spd::{mean_log, spd_log, tangent_len, vec_upper_mat, Mat, SpdMatrix};

/// Base point of the head's tangent alignment at inference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TslrBase {
    /// Mean log of the training outputs, frozen after fitting.
    #[default]
    Train,
    /// Mean log of the batch being predicted.
    Batch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RifuNetConfig {
    /// Empty selects the default U-Net depths.
    pub dims: Vec<usize>,
    pub init: WeightInit,
    pub tslr_base: TslrBase,
    pub lambda_ce: f64,
    pub lambda_act: f64,
    pub lambda_sub: f64,
    pub lambda_w: f64,
    pub lambda_b: f64,
    pub lambda_rec: f64,
    pub train: TrainConfig,
}

impl Default for RifuNetConfig {
    fn default() -> Self {
        Self {
            dims: Vec::new(),
            init: WeightInit::Eigen,
            tslr_base: TslrBase::Train,
            lambda_ce: 1.0,
            lambda_act: 0.01,
            lambda_sub: 0.01,
            lambda_w: 1.0,
            lambda_b: 1.0,
            lambda_rec: 0.1,
            train: TrainConfig::default(),
        }
    }
}

impl RifuNetConfig {
    fn validate(&self) -> Result<()> {
        let w = [
            self.lambda_ce,
            self.lambda_act,
            self.lambda_sub,
            self.lambda_w,
            self.lambda_b,
            self.lambda_rec,
        ];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Config("network loss weights must be non-negative".into()));
        }
        self.train.validate()
    }

    pub fn dims_for(&self, d: usize) -> Result<Vec<usize>> {
        if self.dims.is_empty() {
            return Ok(default_unet_dims(d));
        }
        if self.dims[0] != d {
            return Err(Error::Shape(format!("U-Net input dim {} but data dim {d}", self.dims[0])));
        }
        Ok(self.dims.clone())
    }
}

/// SPD U-Net followed by logistic regression on batch-centred log features.
#[derive(Clone, Debug, PartialEq)]
pub struct RifuNetModel {
    pub net: UNet,
    /// `K × p`.
    pub weights: Mat,
    /// `K × 1`.
    pub bias: Mat,
    pub base: TslrBase,
    /// Mean log of the training outputs (`d × d`).
    pub train_mean_log: Mat,
}

/// Per-item labels, probabilities and head features.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchPrediction {
    pub labels: Vec<usize>,
    pub probabilities: Vec<Vec<f64>>,
    pub features: Vec<Vec<f64>>,
}

fn centred_features(tape: &mut Tape, logs: &[Var], centre: Var) -> Var {
    let rows: Vec<Var> = logs
        .iter()
        .map(|l| {
            let c = tape.sub(*l, centre);
            tape.vec_upper(c)
        })
        .collect();
    tape.stack_rows(&rows)
}

impl RifuNetModel {
    pub fn n_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn params(&self) -> Vec<Param> {
        let mut p = self.net.params();
        p.push(Param::new("weights", self.weights.clone()));
        p.push(Param::new("bias", self.bias.clone()));
        p
    }

    fn set_params(&mut self, params: &[Param]) {
        let n = self.net.n_params();
        self.net.set_params(&params[..n]);
        self.weights = params[n].value.clone();
        self.bias = params[n + 1].value.clone();
    }

    fn split<'a>(&self, vars: &'a [Var]) -> (UNetVars, &'a [Var]) {
        let n = self.net.n_params();
        (self.net.vars_from(&vars[..n]), &vars[n..])
    }

    /// Predicts a batch; the `batch` base mode centres on this batch's mean log.
    pub fn predict_batch(&self, covs: &[&SpdMatrix]) -> Result<BatchPrediction> {
        if covs.is_empty() {
            return Err(Error::EmptyInput);
        }
        let d = self.net.input_dim();
        if let Some(c) = covs.iter().find(|c| c.dim() != d) {
            return Err(Error::Shape(format!("network expects dimension {d}, got {}", c.dim())));
        }
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params().into_iter().map(|p| tape.input(p.value)).collect();
        let (w, head) = self.split(&vars);
        let mut logs = Vec::with_capacity(covs.len());
        for c in covs {
            let x = tape.leaf(c.as_mat().clone(), Shape::Sym(d));
            let out = self.net.forward(&mut tape, &w, x)?;
            logs.push(tape.log(out)?);
        }
        let centre = match self.base {
            TslrBase::Train => tape.input(self.train_mean_log.clone()),
            TslrBase::Batch => tape.mean_of(&logs),
        };
        let z = centred_features(&mut tape, &logs, centre);
        let logits = tape.linear(z, head[0], head[1]);
        let zv = tape.value(z);
        let lv = tape.value(logits);
        let mut out = BatchPrediction {
            labels: Vec::new(),
            probabilities: Vec::new(),
            features: Vec::new(),
        };
        for i in 0..covs.len() {
            let row: Vec<f64> = lv.row(i).iter().copied().collect();
            out.labels.push(argmax(&row));
            out.probabilities.push(softmax(&row));
            out.features.push(zv.row(i).iter().copied().collect());
        }
        Ok(out)
    }
}

/// `λ_CE·CE + λ_act(λ_w W(A) − λ_b B(A)) + λ_sub(λ_b B(S) − λ_w W(S)) + λ_rec·mean ‖C_out − C‖²_F`,
/// head features centred on the minibatch mean log.
pub fn rifunet_loss(
    tape: &mut Tape,
    model: &RifuNetModel,
    vars: &[Var],
    covs: &[&SpdMatrix],
    actions: &[usize],
    subjects: &[usize],
    cfg: &RifuNetConfig,
) -> Result<Var> {
    let (w, head) = model.split(vars);
    let mut logs = Vec::with_capacity(covs.len());
    let mut rec = Vec::with_capacity(covs.len());
    for c in covs {
        let x = tape.leaf(c.as_mat().clone(), Shape::Sym(c.dim()));
        let out = model.net.forward(tape, &w, x)?;
        let diff = tape.sub(out, x);
        rec.push(tape.frob_sq(diff));
        logs.push(tape.log(out)?);
    }
    let centre = tape.mean_of(&logs);
    let z = centred_features(tape, &logs, centre);
    let logits = tape.linear(z, head[0], head[1]);
    let logp = tape.log_softmax(logits);
    let ce = tape.cross_entropy(logp, actions);
    let ce = tape.scale(ce, cfg.lambda_ce);
    let fisher = fisher_penalty(
        tape,
        z,
        actions,
        subjects,
        cfg.lambda_act,
        cfg.lambda_sub,
        cfg.lambda_w,
        cfg.lambda_b,
    );
    let rec = tape.mean_of(&rec);
    let rec = tape.scale(rec, cfg.lambda_rec);
    let total = tape.add(ce, fisher);
    Ok(tape.add(total, rec))
}

pub fn rifunet_fit(ds: &CovarianceSet, cfg: &RifuNetConfig) -> Result<(RifuNetModel, TrainTrace)> {
    cfg.validate()?;
    let actions = ds.labels();
    let k = check_classes(&actions, 1)?;
    let dims = cfg.dims_for(ds.dim())?;
    let covs = ds.covs();
    let basis = eigen_basis(&covs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let net = UNet::new(&dims, cfg.init, &basis, &mut rng)?;
    let p = tangent_len(ds.dim());
    let mut model = RifuNetModel {
        net,
        weights: Mat::zeros(k, p),
        bias: Mat::zeros(k, 1),
        base: cfg.tslr_base,
        train_mean_log: Mat::zeros(ds.dim(), ds.dim()),
    };
    let subjects = dense_groups(&ds.subject_ids());
    let mut params = model.params();
    let trace = train(&mut params, &cfg.train, covs.len(), |tape, vars, batch, _| {
        let bc: Vec<&SpdMatrix> = batch.iter().map(|&i| &covs[i]).collect();
        let ba: Vec<usize> = batch.iter().map(|&i| actions[i]).collect();
        let bs: Vec<usize> = batch.iter().map(|&i| subjects[i]).collect();
        rifunet_loss(tape, &model, vars, &bc, &ba, &bs, cfg)
    })?;
    model.set_params(&params);
    let outs = covs.iter().map(|c| model.net.apply(c)).collect::<Result<Vec<_>>>()?;
    model.train_mean_log = mean_log(&outs)?;
    Ok((model, trace))
}

/// Head feature of one output with an explicit centre (used by tests and tools).
pub fn head_feature(out: &SpdMatrix, centre: &Mat) -> Result<Vec<f64>> {
    Ok(vec_upper_mat(&(spd_log(out)?.into_mat() - centre)))
}
