use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::common::{argmax, check_classes, fisher_penalty, softmax};
use crate::autodiff::{Param, Shape, Tape, Var};
use crate::data::CovarianceSet;
use crate::error::{Error, Result};
use crate::nets::{dense_groups, eigen_basis, init_weight, train, TrainConfig, TrainTrace, WeightInit};
use crate::sampling::gaussian;
use crate::spd::{tangent_len, Mat, SpdMatrix};

/// Ridge added after every congruence layer.
pub const DCNET_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DcNetConfig {
    /// Layer widths; empty selects `[d, 2d, 2d, d]`.
    pub widths: Vec<usize>,
    pub hidden: usize,
    pub eps: f64,
    pub init: WeightInit,
    pub lambda_ce: f64,
    pub lambda_act: f64,
    pub lambda_sub: f64,
    pub lambda_w: f64,
    pub lambda_b: f64,
    pub train: TrainConfig,
}

impl Default for DcNetConfig {
    fn default() -> Self {
        Self {
            widths: Vec::new(),
            hidden: 64,
            eps: DCNET_EPS,
            init: WeightInit::Eigen,
            lambda_ce: 1.0,
            lambda_act: 0.01,
            lambda_sub: 0.01,
            lambda_w: 1.0,
            lambda_b: 1.0,
            train: TrainConfig::default(),
        }
    }
}

impl DcNetConfig {
    pub fn widths_for(&self, d: usize) -> Result<Vec<usize>> {
        if self.widths.is_empty() {
            return Ok(vec![d, 2 * d, 2 * d, d]);
        }
        if self.widths.len() < 2 || self.widths[0] != d || self.widths.contains(&0) {
            return Err(Error::Config(format!("layer widths {:?} do not start at {d}", self.widths)));
        }
        Ok(self.widths.clone())
    }

    fn validate(&self) -> Result<()> {
        let w = [self.lambda_ce, self.lambda_act, self.lambda_sub, self.lambda_w, self.lambda_b];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || !(self.eps > 0.0) || self.hidden == 0 {
            return Err(Error::Config("network loss weights must be non-negative, ε and hidden width positive".into()));
        }
        self.train.validate()
    }
}

/// Congruence stack with a two-layer linear head over tangent features.
#[derive(Clone, Debug, PartialEq)]
pub struct DcNetModel {
    pub stack: Vec<Mat>,
    pub eps: f64,
    /// `hidden × p`.
    pub head_in: Mat,
    /// `K × hidden`.
    pub head_out: Mat,
    /// `K × 1`.
    pub bias: Mat,
}

struct DcVars {
    stack: Vec<Var>,
    head_in: Var,
    head_out: Var,
    bias: Var,
}

impl DcNetModel {
    pub fn new(d: usize, k: usize, cfg: &DcNetConfig, basis: &Mat, rng: &mut ChaCha8Rng) -> Result<Self> {
        let widths = cfg.widths_for(d)?;
        let stack = widths
            .windows(2)
            .map(|w| init_weight(cfg.init, basis, w[0], w[1], rng))
            .collect();
        let p = tangent_len(*widths.last().expect("two widths"));
        Ok(Self {
            stack,
            eps: cfg.eps,
            head_in: gaussian(rng, cfg.hidden, p) / (p as f64).sqrt(),
            head_out: gaussian(rng, k, cfg.hidden) / (cfg.hidden as f64).sqrt(),
            bias: Mat::zeros(k, 1),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.stack[0].nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.head_out.nrows()
    }

    pub fn params(&self) -> Vec<Param> {
        let mut out: Vec<Param> = self
            .stack
            .iter()
            .enumerate()
            .map(|(l, w)| Param::new(format!("layer{l}"), w.clone()))
            .collect();
        out.push(Param::new("head_in", self.head_in.clone()));
        out.push(Param::new("head_out", self.head_out.clone()));
        out.push(Param::new("bias", self.bias.clone()));
        out
    }

    fn set_params(&mut self, params: &[Param]) {
        let l = self.stack.len();
        for (w, p) in self.stack.iter_mut().zip(params) {
            *w = p.value.clone();
        }
        self.head_in = params[l].value.clone();
        self.head_out = params[l + 1].value.clone();
        self.bias = params[l + 2].value.clone();
    }

    fn vars(&self, vars: &[Var]) -> DcVars {
        let l = self.stack.len();
        DcVars {
            stack: vars[..l].to_vec(),
            head_in: vars[l],
            head_out: vars[l + 1],
            bias: vars[l + 2],
        }
    }

    /// Tangent feature `vec(log C_out)` of one input.
    fn feature(&self, tape: &mut Tape, v: &DcVars, c: &SpdMatrix) -> Result<Var> {
        let mut x = tape.leaf(c.as_mat().clone(), Shape::Sym(c.dim()));
        for w in &v.stack {
            x = tape.congruence(x, *w);
            x = tape.add_identity(x, self.eps);
        }
        let l = tape.log(x)?;
        Ok(tape.vec_upper(l))
    }

    fn head(&self, tape: &mut Tape, v: &DcVars, z: Var) -> Var {
        let wt = tape.transpose(v.head_in);
        let h = tape.matmul(z, wt);
        tape.linear(h, v.head_out, v.bias)
    }

    /// Logits for a set of inputs.
    pub fn logits(&self, covs: &[&SpdMatrix]) -> Result<Mat> {
        if covs.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(c) = covs.iter().find(|c| c.dim() != self.input_dim()) {
            return Err(Error::Shape(format!("network expects dimension {}, got {}", self.input_dim(), c.dim())));
        }
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.params().into_iter().map(|p| tape.input(p.value)).collect();
        let v = self.vars(&vars);
        let rows = covs.iter().map(|c| self.feature(&mut tape, &v, c)).collect::<Result<Vec<_>>>()?;
        let z = tape.stack_rows(&rows);
        let out = self.head(&mut tape, &v, z);
        Ok(tape.value(out).clone())
    }

    pub fn predict(&self, c: &SpdMatrix) -> Result<(usize, Vec<f64>)> {
        let l = self.logits(&[c])?;
        let row: Vec<f64> = l.row(0).iter().copied().collect();
        Ok((argmax(&row), softmax(&row)))
    }
}

/// `λ_CE·CE + λ_act(λ_w W(A) − λ_b B(A)) + λ_sub(λ_b B(S) − λ_w W(S))` on one minibatch.
pub fn dcnet_loss(
    tape: &mut Tape,
    model: &DcNetModel,
    vars: &[Var],
    covs: &[&SpdMatrix],
    actions: &[usize],
    subjects: &[usize],
    cfg: &DcNetConfig,
) -> Result<Var> {
    let v = model.vars(vars);
    let rows = covs.iter().map(|c| model.feature(tape, &v, c)).collect::<Result<Vec<_>>>()?;
    let z = tape.stack_rows(&rows);
    let logits = model.head(tape, &v, z);
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
    Ok(tape.add(ce, fisher))
}

pub fn dcnet_fit(ds: &CovarianceSet, cfg: &DcNetConfig) -> Result<(DcNetModel, TrainTrace)> {
    cfg.validate()?;
    let actions = ds.labels();
    let k = check_classes(&actions, 1)?;
    let covs = ds.covs();
    let basis = eigen_basis(&covs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let mut model = DcNetModel::new(ds.dim(), k, cfg, &basis, &mut rng)?;
    let subjects = dense_groups(&ds.subject_ids());
    let mut params = model.params();
    let trace = train(&mut params, &cfg.train, covs.len(), |tape, vars, batch, _| {
        let bc: Vec<&SpdMatrix> = batch.iter().map(|&i| &covs[i]).collect();
        let ba: Vec<usize> = batch.iter().map(|&i| actions[i]).collect();
        let bs: Vec<usize> = batch.iter().map(|&i| subjects[i]).collect();
        dcnet_loss(tape, &model, vars, &bc, &ba, &bs, cfg)
    })?;
    model.set_params(&params);
    Ok((model, trace))
}
