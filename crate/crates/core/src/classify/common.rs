use crate::autodiff::{Tape, Var};
use crate::data::CovarianceSet;
use crate::error::{Error, Result};
use crate::spd::{congruence, spd_log, spd_power, vec_upper_mat, Mat, SpdMatrix};

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Index of the smallest value; ties go to the lowest index.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|x| (x - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Requires every class `0..K` to have at least `min` items; returns `K`.
pub(crate) fn check_classes(labels: &[usize], min: usize) -> Result<usize> {
    let k = labels.iter().map(|l| l + 1).max().ok_or(Error::EmptyInput)?;
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    if k < 2 {
        return Err(Error::Training("need at least two classes".into()));
    }
    if let Some(c) = counts.iter().position(|&n| n < min) {
        return Err(Error::Training(format!(
            "class {c} has {} training items, need at least {min}",
            counts[c]
        )));
    }
    Ok(k)
}

/// Tangent coordinates at a fixed base point: `vec(log(B^{-1/2} C B^{-1/2}))`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentMap {
    pub base: SpdMatrix,
    pub base_isqrt: Mat,
}

impl TangentMap {
    pub fn new(base: SpdMatrix) -> Result<Self> {
        let base_isqrt = spd_power(&base, -0.5)?.into_mat();
        Ok(Self { base, base_isqrt })
    }

    pub fn features(&self, c: &SpdMatrix) -> Result<Vec<f64>> {
        if c.dim() != self.base.dim() {
            return Err(Error::Shape(format!(
                "expected dimension {}, got {}",
                self.base.dim(),
                c.dim()
            )));
        }
        let w = congruence(c, &self.base_isqrt)?;
        Ok(vec_upper_mat(spd_log(&w)?.as_mat()))
    }

    pub fn features_of(&self, ds: &CovarianceSet) -> Result<Vec<Vec<f64>>> {
        ds.items().iter().map(|it| self.features(&it.cov)).collect()
    }
}

/// Fisher regularizer `λ_act(λ_w W(A) − λ_b B(A)) + λ_sub(λ_b B(S) − λ_w W(S))`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn fisher_penalty(
    tape: &mut Tape,
    z: Var,
    actions: &[usize],
    subjects: &[usize],
    lambda_act: f64,
    lambda_sub: f64,
    lambda_w: f64,
    lambda_b: f64,
) -> Var {
    let wa = tape.within_scatter(z, actions);
    let ba = tape.between_scatter(z, actions);
    let ws = tape.within_scatter(z, subjects);
    let bs = tape.between_scatter(z, subjects);
    let wa = tape.scale(wa, lambda_act * lambda_w);
    let ba = tape.scale(ba, -lambda_act * lambda_b);
    let bs = tape.scale(bs, lambda_sub * lambda_b);
    let ws = tape.scale(ws, -lambda_sub * lambda_w);
    let a = tape.add(wa, ba);
    let s = tape.add(bs, ws);
    tape.add(a, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_resolve_to_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmin(&[2.0, 1.0, 1.0]), 1);
    }

    #[test]
    fn softmax_sums_to_one_even_for_large_logits() {
        let p = softmax(&[1000.0, 999.0, -1000.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[0] > p[1] && p[2] == 0.0);
    }

    #[test]
    fn missing_class_is_a_training_error() {
        assert!(matches!(check_classes(&[0, 2, 2], 1), Err(Error::Training(_))));
        assert!(matches!(check_classes(&[0, 0], 1), Err(Error::Training(_))));
        assert_eq!(check_classes(&[0, 1, 1, 0], 2).unwrap(), 2);
    }

    #[test]
    fn tangent_at_identity_is_plain_log() {
        let t = TangentMap::new(SpdMatrix::identity(2)).unwrap();
        let c = SpdMatrix::from_diagonal(&[std::f64::consts::E, 1.0]);
        let z = t.features(&c).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-14 && z[1].abs() < 1e-14 && z[2].abs() < 1e-14);
    }
}
