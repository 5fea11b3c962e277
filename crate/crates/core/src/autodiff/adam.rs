use crate::error::{Error, Result};
use crate::spd::Mat;

/// Named trainable tensor.
#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Mat,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Mat) -> Self {
        Self {
            name: name.into(),
            value,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay coefficient.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

/// Adam with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. Fails without touching any parameter if a gradient is non-finite.
    pub fn step(&mut self, params: &mut [Param], grads: &[Mat]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if g.shape() != p.value.shape() {
                return Err(Error::Shape(format!("gradient shape mismatch for `{}`", p.name)));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::Training(format!("non-finite gradient for `{}`", p.name)));
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Mat::zeros(p.value.nrows(), p.value.ncols())).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            m.zip_apply(g, |mi, gi| *mi = c.beta1 * *mi + (1.0 - c.beta1) * gi);
            v.zip_apply(g, |vi, gi| *vi = c.beta2 * *vi + (1.0 - c.beta2) * gi * gi);
            p.value *= 1.0 - c.lr * c.weight_decay;
            for ((pi, mi), vi) in p.value.iter_mut().zip(m.iter()).zip(v.iter()) {
                let mh = mi / bc1;
                let vh = vi / bc2;
                *pi -= c.lr * mh / (vh.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

/// Rescales `grads` in place so their joint Frobenius norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Mat], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.norm_squared()).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= s;
        }
    }
    norm
}
