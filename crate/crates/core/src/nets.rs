//! Congruence-layer building blocks shared by the learned aligners and classifiers.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{clip_global_norm, Adam, AdamConfig, Param, Tape, Var};
use crate::error::{Error, Result};
use crate::sampling::gaussian;
use crate::spd::{jacobi_eigen, Mat, SpdMatrix};

/// Ridge added after a congruence that maps to a larger dimension (rank-deficient by construction).
pub const UPSAMPLE_EPS: f64 = 1e-3;
/// Standard deviation of the symmetry-breaking noise added to eigenvector initializations.
pub const INIT_NOISE: f64 = 0.01;
/// Global gradient-norm clip.
pub const GRAD_CLIP: f64 = 10.0;
/// Training stops once the loss falls below this (the Fisher objectives are unbounded).
pub const DIVERGENCE_FLOOR: f64 = -1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightInit {
    /// Slices of the eigenbasis of the Euclidean mean covariance.
    Eigen,
    /// Rectangular identity, no noise.
    Identity,
}

/// Eigenvectors of the Euclidean mean, columns ordered by descending eigenvalue.
pub fn eigen_basis(covs: &[SpdMatrix]) -> Result<Mat> {
    let first = covs.first().ok_or(Error::EmptyInput)?;
    let d = first.dim();
    let mut mean = Mat::zeros(d, d);
    for c in covs {
        mean += c.as_mat();
    }
    mean /= covs.len() as f64;
    let eig = jacobi_eigen(&mean)?;
    let mut u = Mat::zeros(d, d);
    for j in 0..d {
        u.set_column(j, &eig.eigenvectors.column(d - 1 - j));
    }
    Ok(u)
}

/// `d_in × d_out` initial congruence weight.
///
/// `Eigen` takes the leading block of `blockdiag(U, I)` (the identity pads
/// layers wider than the basis) plus seeded noise.
pub fn init_weight(
    init: WeightInit,
    basis: &Mat,
    d_in: usize,
    d_out: usize,
    rng: &mut ChaCha8Rng,
) -> Mat {
    match init {
        WeightInit::Identity => Mat::identity(d_in, d_out),
        WeightInit::Eigen => {
            let c = basis.nrows();
            let w = Mat::from_fn(d_in, d_out, |i, j| {
                if i < c && j < c {
                    basis[(i, j)]
                } else if i == j {
                    1.0
                } else {
                    0.0
                }
            });
            w + gaussian(rng, d_in, d_out) * INIT_NOISE
        }
    }
}

/// `exp(½(log A + log B))` recorded on the tape.
pub fn merge(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let la = tape.log(a)?;
    let lb = tape.log(b)?;
    let s = tape.add(la, lb);
    let m = tape.scale(s, 0.5);
    tape.exp_sym(m)
}

/// SPD encoder–decoder with log-Euclidean skip merges.
///
/// `dims = [d₀, d₁, …, d_L]`. Encoder layer `l` maps `d_l → d_{l+1}`; decoder
/// layer `l` maps `d_{l+1} → d_l` and its output is merged with the encoder
/// activation at depth `l` (the input itself for `l = 0`).
#[derive(Clone, Debug, PartialEq)]
pub struct UNet {
    pub dims: Vec<usize>,
    pub enc: Vec<Mat>,
    pub dec: Vec<Mat>,
}

/// Tape handles for a [`UNet`]'s weights.
#[derive(Clone, Debug)]
pub struct UNetVars {
    pub enc: Vec<Var>,
    pub dec: Vec<Var>,
}

impl UNet {
    pub fn new(dims: &[usize], init: WeightInit, basis: &Mat, rng: &mut ChaCha8Rng) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("U-Net needs at least two positive dims, got {dims:?}")));
        }
        if dims.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Config(format!("U-Net encoder dims must not increase: {dims:?}")));
        }
        let enc = dims
            .windows(2)
            .map(|w| init_weight(init, basis, w[0], w[1], rng))
            .collect();
        let dec = dims
            .windows(2)
            .map(|w| init_weight(init, basis, w[1], w[0], rng))
            .collect();
        Ok(Self {
            dims: dims.to_vec(),
            enc,
            dec,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn params(&self) -> Vec<Param> {
        let mut out: Vec<Param> = self
            .enc
            .iter()
            .enumerate()
            .map(|(l, w)| Param::new(format!("enc{l}"), w.clone()))
            .collect();
        out.extend(self.dec.iter().enumerate().map(|(l, w)| Param::new(format!("dec{l}"), w.clone())));
        out
    }

    pub fn n_params(&self) -> usize {
        self.enc.len() + self.dec.len()
    }

    /// Inverse of [`UNet::params`].
    pub fn set_params(&mut self, params: &[Param]) {
        let l = self.enc.len();
        for (w, p) in self.enc.iter_mut().zip(&params[..l]) {
            *w = p.value.clone();
        }
        for (w, p) in self.dec.iter_mut().zip(&params[l..2 * l]) {
            *w = p.value.clone();
        }
    }

    pub fn vars_from(&self, vars: &[Var]) -> UNetVars {
        let l = self.enc.len();
        UNetVars {
            enc: vars[..l].to_vec(),
            dec: vars[l..2 * l].to_vec(),
        }
    }

    pub fn leaves(&self, tape: &mut Tape) -> UNetVars {
        UNetVars {
            enc: self.enc.iter().map(|w| tape.input(w.clone())).collect(),
            dec: self.dec.iter().map(|w| tape.input(w.clone())).collect(),
        }
    }

    pub fn forward(&self, tape: &mut Tape, w: &UNetVars, c: Var) -> Result<Var> {
        let mut acts = vec![c];
        let mut x = c;
        for e in &w.enc {
            x = tape.congruence(x, *e);
            acts.push(x);
        }
        for l in (0..w.dec.len()).rev() {
            x = tape.congruence(x, w.dec[l]);
            if self.dims[l] > self.dims[l + 1] {
                x = tape.add_identity(x, UPSAMPLE_EPS);
            }
            x = merge(tape, x, acts[l])?;
        }
        Ok(x)
    }

    /// Forward pass without gradient bookkeeping beyond a throwaway tape.
    pub fn apply(&self, c: &SpdMatrix) -> Result<SpdMatrix> {
        if c.dim() != self.input_dim() {
            return Err(Error::Shape(format!(
                "U-Net expects dimension {}, got {}",
                self.input_dim(),
                c.dim()
            )));
        }
        let mut tape = Tape::new();
        let w = self.leaves(&mut tape);
        let x = tape.leaf(c.as_mat().clone(), crate::autodiff::Shape::Sym(c.dim()));
        let out = self.forward(&mut tape, &w, x)?;
        Ok(SpdMatrix::from_spd(tape.value(out).clone()))
    }
}

/// Minibatch and optimizer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 256,
            lr: 1e-3,
            weight_decay: 1e-5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("learning rate must be positive and weight decay non-negative".into()));
        }
        Ok(())
    }
}

/// Seeded epoch-wise shuffled minibatches.
#[derive(Debug)]
pub struct Batches {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
    size: usize,
}

impl Batches {
    pub fn new(n: usize, size: usize, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..n).collect(),
            pos: n,
            size: size.min(n).max(1),
        }
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.pos + self.size > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let b = self.order[self.pos..self.pos + self.size].to_vec();
        self.pos += self.size;
        b
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    /// Minibatch loss before each update.
    pub losses: Vec<f64>,
    pub stopped_early: bool,
}

/// Adam loop with gradient clipping and the divergence guard.
///
/// `loss_fn(tape, params, batch, step)` records the minibatch loss.
pub fn train<F>(params: &mut [Param], cfg: &TrainConfig, n_items: usize, mut loss_fn: F) -> Result<TrainTrace>
where
    F: FnMut(&mut Tape, &[Var], &[usize], usize) -> Result<Var>,
{
    cfg.validate()?;
    if n_items == 0 {
        return Err(Error::EmptyInput);
    }
    let mut batches = Batches::new(n_items, cfg.batch_size, cfg.seed);
    let mut opt = Adam::new(cfg.adam());
    let mut trace = TrainTrace::default();
    for step in 0..cfg.steps {
        let batch = batches.next_batch();
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.input(p.value.clone())).collect();
        let loss = loss_fn(&mut tape, &vars, &batch, step)
            .map_err(|e| Error::Training(format!("step {step}: {e}")))?;
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(Error::Numerical(format!("non-finite loss at step {step}")));
        }
        trace.losses.push(value);
        if value < DIVERGENCE_FLOOR {
            log::warn!("loss {value:e} below divergence floor at step {step}; stopping");
            trace.stopped_early = true;
            break;
        }
        let grads = tape.backward(loss)?;
        let mut g: Vec<Mat> = vars.iter().map(|v| grads.wrt(*v)).collect();
        clip_global_norm(&mut g, GRAD_CLIP);
        opt.step(params, &g)
            .map_err(|e| Error::Training(format!("step {step}: {e}")))?;
    }
    Ok(trace)
}

/// Dense 0-based group index per item, in order of first appearance after sorting keys.
pub fn dense_groups<K: Ord + Copy>(keys: &[K]) -> Vec<usize> {
    let mut uniq: Vec<K> = keys.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    keys.iter()
        .map(|k| uniq.binary_search(k).expect("key present"))
        .collect()
}
