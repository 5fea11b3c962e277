use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::autodiff::{skew_exp, Param, Tape, Var};
use crate::data::CovarianceSet;
use crate::error::{Error, Result};
use crate::nets::{train, TrainConfig, TrainTrace};
use crate::spd::{congruence_mat, spd_exp, spd_log, Mat, SpdMatrix, SymMatrix};

/// Offset keeping the learned scale strictly positive.
pub const SCALE_OFFSET: f64 = 1e-6;

/// Weights of the rotation/scale pre-aligner loss
/// `γ·W/(B+ε) + γ_c·offdiag² + α(λ−1)² + β_t‖R−I‖²_F/d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DcrHyper {
    pub gamma: f64,
    pub gamma_center: f64,
    pub alpha: f64,
    pub beta: f64,
    pub eps: f64,
    pub train: TrainConfig,
}

impl Default for DcrHyper {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            gamma_center: 0.1,
            alpha: 0.1,
            beta: 0.01,
            eps: 1e-6,
            train: TrainConfig::default(),
        }
    }
}

impl DcrHyper {
    pub fn validate(&self) -> Result<()> {
        let w = [self.gamma, self.gamma_center, self.alpha, self.beta];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || !(self.eps > 0.0) {
            return Err(Error::Config("DCR weights must be non-negative and eps positive".into()));
        }
        self.train.validate()
    }
}

/// `β(1 + cos(πt/T))/2`.
pub fn beta_schedule(beta: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    beta * (1.0 + (PI * step as f64 / total as f64).cos()) / 2.0
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `softplus⁻¹(λ − offset)`.
fn raw_for_scale(scale: f64) -> f64 {
    (scale - SCALE_OFFSET).exp_m1().ln()
}

/// Learned global rotation `R = exp(A − Aᵀ)` and log-domain scale `λ`.
#[derive(Clone, Debug, PartialEq)]
pub struct DcrModel {
    pub generator: Mat,
    pub raw_scale: f64,
}

impl DcrModel {
    /// `A = 0`, `λ_raw = ln(e − 1)`.
    pub fn initial(dim: usize) -> Self {
        Self {
            generator: Mat::zeros(dim, dim),
            raw_scale: (std::f64::consts::E - 1.0).ln(),
        }
    }

    /// Model with the given generator and effective scale.
    pub fn with_scale(generator: Mat, scale: f64) -> Result<Self> {
        if !(scale > SCALE_OFFSET) {
            return Err(Error::Config(format!("scale must exceed {SCALE_OFFSET}")));
        }
        Ok(Self {
            generator,
            raw_scale: raw_for_scale(scale),
        })
    }

    pub fn dim(&self) -> usize {
        self.generator.nrows()
    }

    pub fn scale(&self) -> f64 {
        softplus(self.raw_scale) + SCALE_OFFSET
    }

    pub fn rotation(&self) -> Result<Mat> {
        let mut t = Tape::new();
        let a = t.input(self.generator.clone());
        let r = skew_exp(&mut t, a)?;
        Ok(t.value(r).clone())
    }

    /// `exp(Rᵀ(λ·log C)R)`.
    pub fn apply_one(&self, c: &SpdMatrix) -> Result<SpdMatrix> {
        let r = self.rotation()?;
        self.apply_with(&r, c)
    }

    fn apply_with(&self, r: &Mat, c: &SpdMatrix) -> Result<SpdMatrix> {
        if c.dim() != self.dim() {
            return Err(Error::Shape(format!("DCR model has dim {}, input {}", self.dim(), c.dim())));
        }
        let scaled = spd_log(c)?.into_mat() * self.scale();
        spd_exp(&SymMatrix::new(congruence_mat(&scaled, r))?)
    }
}

/// Loss on a set of precomputed logs; `a` is the generator and `raw` the raw scale.
#[allow(clippy::too_many_arguments)]
pub fn dcr_loss(
    tape: &mut Tape,
    logs: &[&Mat],
    labels: &[usize],
    a: Var,
    raw: Var,
    hyper: &DcrHyper,
    step: usize,
) -> Result<Var> {
    let d = logs[0].nrows();
    let n = logs.len() as f64;
    let r = skew_exp(tape, a)?;
    let sp = tape.softplus(raw);
    let lambda = tape.shift(sp, SCALE_OFFSET);
    let mut rows = Vec::with_capacity(logs.len());
    let mut rotated = Vec::with_capacity(logs.len());
    for l in logs {
        let lv = tape.input((*l).clone());
        let scaled = tape.scale_by(lambda, lv);
        let rot = tape.congruence(scaled, r);
        rows.push(tape.vec_upper(rot));
        rotated.push(rot);
    }
    let z = tape.stack_rows(&rows);
    let w = tape.within_scatter(z, labels);
    let w = tape.scale(w, n);
    let b = tape.between_scatter(z, labels);
    let b = tape.scale(b, n);
    let b_eps = tape.shift(b, hyper.eps);
    let ratio = tape.div(w, b_eps);
    let fisher = tape.scale(ratio, hyper.gamma);

    let centre = tape.mean_of(&rotated);
    let off = tape.offdiag_sq(centre);
    let centre_pen = tape.scale(off, hyper.gamma_center);

    let dev = tape.shift(lambda, -1.0);
    let dev2 = tape.mul(dev, dev);
    let scale_pen = tape.scale(dev2, hyper.alpha);

    let r_minus_i = tape.add_identity(r, -1.0);
    let rdev = tape.frob_sq(r_minus_i);
    let beta_t = beta_schedule(hyper.beta, step, hyper.train.steps);
    let rot_pen = tape.scale(rdev, beta_t / d as f64);

    let s = tape.add(fisher, centre_pen);
    let s = tape.add(s, scale_pen);
    Ok(tape.add(s, rot_pen))
}

#[derive(Clone, Debug)]
pub struct DcrFit {
    pub model: DcrModel,
    /// Full-set loss at step 0 with the initial parameters.
    pub initial_loss: f64,
    /// Full-set loss at step `T` with the trained parameters.
    pub final_loss: f64,
    pub trace: TrainTrace,
}

fn full_loss(logs: &[Mat], labels: &[usize], model: &DcrModel, hyper: &DcrHyper, step: usize) -> Result<f64> {
    let mut t = Tape::new();
    let a = t.input(model.generator.clone());
    let raw = t.constant_scalar(model.raw_scale);
    let refs: Vec<&Mat> = logs.iter().collect();
    let l = dcr_loss(&mut t, &refs, labels, a, raw, hyper, step)?;
    Ok(t.scalar(l))
}

/// Trains on an RA-whitened labelled set.
pub fn dcr_fit(ds: &CovarianceSet, hyper: &DcrHyper) -> Result<DcrFit> {
    hyper.validate()?;
    let labels = ds.labels();
    let distinct = labels.iter().collect::<std::collections::BTreeSet<_>>().len();
    if distinct < 2 {
        return Err(Error::Training("DCR needs at least two classes".into()));
    }
    let logs = ds
        .items()
        .iter()
        .map(|it| Ok(spd_log(&it.cov)?.into_mat()))
        .collect::<Result<Vec<_>>>()?;
    let mut model = DcrModel::initial(ds.dim());
    let initial_loss = full_loss(&logs, &labels, &model, hyper, 0)?;

    let mut params = vec![
        Param::new("generator", model.generator.clone()),
        Param::new("raw_scale", Mat::from_element(1, 1, model.raw_scale)),
    ];
    let trace = train(&mut params, &hyper.train, logs.len(), |tape, vars, batch, step| {
        let bl: Vec<&Mat> = batch.iter().map(|&i| &logs[i]).collect();
        let by: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
        dcr_loss(tape, &bl, &by, vars[0], vars[1], hyper, step)
    })?;
    model.generator = params[0].value.clone();
    model.raw_scale = params[1].value[(0, 0)];
    let final_loss = full_loss(&logs, &labels, &model, hyper, hyper.train.steps)?;
    Ok(DcrFit {
        model,
        initial_loss,
        final_loss,
        trace,
    })
}

pub fn dcr_apply(model: &DcrModel, ds: &CovarianceSet) -> Result<CovarianceSet> {
    let r = model.rotation()?;
    let covs = ds
        .items()
        .iter()
        .map(|it| model.apply_with(&r, &it.cov))
        .collect::<Result<Vec<_>>>()?;
    ds.with_covs(covs)
}
