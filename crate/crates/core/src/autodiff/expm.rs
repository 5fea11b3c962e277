//! Differentiable matrix exponential for general square matrices.

use super::tape::{Tape, Var};
use crate::error::Result;

// [7/7] Padé coefficients
const PADE7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1_512.0,
    56.0,
    1.0,
];

/// Scaling exponent `s` such that `‖X‖₁ / 2^s ≤ 0.5`.
pub fn squaring_steps(norm1: f64) -> u32 {
    if norm1 <= 0.5 || !norm1.is_finite() {
        0
    } else {
        (norm1 / 0.5).log2().ceil().max(0.0) as u32
    }
}

fn norm1(m: &crate::spd::Mat) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(X)` by scaling and squaring over a [7/7] Padé approximant, recorded on the tape.
///
/// The squaring count is chosen from the primal value and is not differentiated.
pub fn expm(tape: &mut Tape, x: Var) -> Result<Var> {
    let s = squaring_steps(norm1(tape.value(x)));
    let y = tape.scale(x, 0.5f64.powi(s as i32));
    let y2 = tape.matmul(y, y);
    let y4 = tape.matmul(y2, y2);
    let y6 = tape.matmul(y4, y2);

    let b = PADE7;
    let u6 = tape.scale(y6, b[7]);
    let u4 = tape.scale(y4, b[5]);
    let u2 = tape.scale(y2, b[3]);
    let inner = tape.add(u6, u4);
    let inner = tape.add(inner, u2);
    let inner = tape.add_identity(inner, b[1]);
    let u = tape.matmul(y, inner);

    let v6 = tape.scale(y6, b[6]);
    let v4 = tape.scale(y4, b[4]);
    let v2 = tape.scale(y2, b[2]);
    let v = tape.add(v6, v4);
    let v = tape.add(v, v2);
    let v = tape.add_identity(v, b[0]);

    let num = tape.add(v, u);
    let den = tape.sub(v, u);
    let mut e = tape.solve(den, num)?;
    for _ in 0..s {
        e = tape.matmul(e, e);
    }
    Ok(e)
}

/// Orthogonal `exp(A − Aᵀ)`.
pub fn skew_exp(tape: &mut Tape, a: Var) -> Result<Var> {
    let at = tape.transpose(a);
    let skew = tape.sub(a, at);
    expm(tape, skew)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Shape;
    use crate::sampling::gaussian;
    use crate::spd::{spd_exp, Mat, SymMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_gives_identity() {
        let mut t = Tape::new();
        let a = t.leaf(Mat::zeros(4, 4), Shape::Matrix(4, 4));
        let r = skew_exp(&mut t, a).unwrap();
        assert_eq!(t.value(r), &Mat::identity(4, 4));
    }

    #[test]
    fn matches_spectral_exp_on_symmetric_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = gaussian(&mut rng, 5, 5);
        let s = (&g + g.transpose()) * 1.5;
        let mut t = Tape::new();
        let x = t.input(s.clone());
        let e = expm(&mut t, x).unwrap();
        let reference = spd_exp(&SymMatrix::new(s).unwrap()).unwrap();
        let err = (t.value(e) - reference.as_mat()).amax() / reference.as_mat().amax();
        assert!(err < 1e-12, "relative error {err}");
    }

    #[test]
    fn skew_exp_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for scale in [0.01, 1.0, 10.0] {
            let a = gaussian(&mut rng, 6, 6) * scale;
            let mut t = Tape::new();
            let av = t.input(a);
            let r = skew_exp(&mut t, av).unwrap();
            let r = t.value(r);
            let err = (r.transpose() * r - Mat::identity(6, 6)).amax();
            assert!(err < 1e-12, "scale {scale}: ‖RᵀR − I‖∞ = {err}");
        }
    }

    #[test]
    fn squaring_steps_bound() {
        assert_eq!(squaring_steps(0.0), 0);
        assert_eq!(squaring_steps(0.5), 0);
        assert_eq!(squaring_steps(0.6), 1);
        assert_eq!(squaring_steps(4.0), 3);
    }
}
