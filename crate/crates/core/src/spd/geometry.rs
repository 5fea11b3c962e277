//! Affine-invariant (AIRM) and log-Euclidean operations.

use super::{
    effective_eigenvalues, jacobi_eigen, symmetrize_in_place, EigDecomposition, Mat, SpdMatrix,
    SpectralFn, SymMatrix, EIGEN_FLOOR,
};
use crate::error::{Error, Result};

/// Largest eigenvalue `spd_exp` accepts before `e^λ` overflows.
const EXP_LIMIT: f64 = 700.0;

pub fn sym_eig(m: &SymMatrix) -> Result<EigDecomposition> {
    jacobi_eigen(m.as_mat())
}

/// `U f(Λ) Uᵀ` of a symmetric matrix, with the positivity floor applied for
/// functions that need it. Returns the decomposition so callers can reuse it.
pub fn spectral_mat(m: &Mat, f: SpectralFn) -> Result<(Mat, EigDecomposition)> {
    let eig = jacobi_eigen(m)?;
    if f.needs_positive() {
        let max = eig.max_eigenvalue();
        let floor = EIGEN_FLOOR * max.max(0.0);
        if max <= 0.0 || eig.min_eigenvalue() < -floor {
            return Err(Error::NotPositiveDefinite {
                min_eig: eig.min_eigenvalue(),
                floor: -floor,
            });
        }
    } else if eig.max_eigenvalue() > EXP_LIMIT {
        return Err(Error::Numerical(format!(
            "matrix exponential overflow: eigenvalue {} exceeds {EXP_LIMIT}",
            eig.max_eigenvalue()
        )));
    }
    let values: Vec<f64> = effective_eigenvalues(f, &eig)
        .into_iter()
        .map(|l| f.value(l))
        .collect();
    Ok((eig.recompose(&values), eig))
}

pub fn spd_log(c: &SpdMatrix) -> Result<SymMatrix> {
    Ok(SymMatrix::from_symmetric(spectral_mat(c.as_mat(), SpectralFn::Log)?.0))
}

pub fn spd_exp(s: &SymMatrix) -> Result<SpdMatrix> {
    Ok(SpdMatrix::from_spd(spectral_mat(s.as_mat(), SpectralFn::Exp)?.0))
}

pub fn spd_power(c: &SpdMatrix, p: f64) -> Result<SpdMatrix> {
    let f = if p == 0.5 {
        SpectralFn::Sqrt
    } else if p == -0.5 {
        SpectralFn::InvSqrt
    } else {
        SpectralFn::Pow(p)
    };
    Ok(SpdMatrix::from_spd(spectral_mat(c.as_mat(), f)?.0))
}

fn same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("dimension mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// `Wᵀ C W`, symmetrized. No positivity check.
pub fn congruence_mat(c: &Mat, w: &Mat) -> Mat {
    let mut out = w.transpose() * (c * w);
    symmetrize_in_place(&mut out);
    out
}

/// `Wᵀ C W` for `W ∈ R^{d_in × d_out}`; fails when the result is numerically
/// singular, which happens exactly when `W` lacks full column rank.
pub fn congruence(c: &SpdMatrix, w: &Mat) -> Result<SpdMatrix> {
    if w.nrows() != c.dim() {
        return Err(Error::Shape(format!(
            "congruence weight has {} rows, matrix dim is {}",
            w.nrows(),
            c.dim()
        )));
    }
    if w.ncols() == 0 || w.ncols() > w.nrows() {
        return Err(Error::Shape(format!(
            "congruence weight must be d_in x d_out with 0 < d_out <= d_in, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    let out = congruence_mat(c.as_mat(), w);
    let eig = jacobi_eigen(&out)?;
    let max = eig.max_eigenvalue();
    let floor = EIGEN_FLOOR * max.max(0.0);
    if max <= 0.0 || eig.min_eigenvalue() <= floor {
        return Err(Error::NotPositiveDefinite {
            min_eig: eig.min_eigenvalue(),
            floor,
        });
    }
    Ok(SpdMatrix::from_spd(out))
}

/// Eigenvalues of `C1^{-1/2} C2 C1^{-1/2}`, plus a lower bound implied by the
/// positivity floor on `C2`.
///
/// The whitened matrix is formed in the eigenbasis of `C1` as
/// `Λ^{-1/2} (Uᵀ C2 U) Λ^{-1/2}` rather than rotated back. That matrix is graded,
/// so Jacobi resolves its small eigenvalues to relative accuracy governed by
/// `cond(C1) + cond(C2)` instead of their product.
fn relative_spectrum(c1: &SpdMatrix, c2: &SpdMatrix) -> Result<(Vec<f64>, f64)> {
    same_dim(c1.dim(), c2.dim())?;
    let eig = jacobi_eigen(c1.as_mat())?;
    let lambdas = effective_eigenvalues(SpectralFn::InvSqrt, &eig);
    let u = &eig.eigenvectors;
    let mut m = u.transpose() * (c2.as_mat() * u);
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] /= (lambdas[i] * lambdas[j]).sqrt();
        }
    }
    symmetrize_in_place(&mut m);
    let floor = EIGEN_FLOOR * c2.as_mat().trace() / (n as f64 * eig.max_eigenvalue());
    Ok((jacobi_eigen(&m)?.eigenvalues, floor))
}

/// `‖log(C1^{-1/2} C2 C1^{-1/2})‖_F`.
pub fn airm_distance(c1: &SpdMatrix, c2: &SpdMatrix) -> Result<f64> {
    let (spectrum, floor) = relative_spectrum(c1, c2)?;
    Ok(spectrum
        .iter()
        .map(|&l| l.max(floor).ln().powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Riemannian log at `base`: `B^{1/2} log(B^{-1/2} C B^{-1/2}) B^{1/2}`.
pub fn log_map(base: &SpdMatrix, c: &SpdMatrix) -> Result<SymMatrix> {
    same_dim(base.dim(), c.dim())?;
    let (sqrt, eig) = spectral_mat(base.as_mat(), SpectralFn::Sqrt)?;
    let isqrt = inv_sqrt_from(&eig);
    let inner = spectral_mat(&congruence_mat(c.as_mat(), &isqrt), SpectralFn::Log)?.0;
    Ok(SymMatrix::from_symmetric(congruence_mat(&inner, &sqrt)))
}

/// Riemannian exp at `base`: `B^{1/2} exp(B^{-1/2} V B^{-1/2}) B^{1/2}`.
pub fn exp_map(base: &SpdMatrix, v: &SymMatrix) -> Result<SpdMatrix> {
    same_dim(base.dim(), v.dim())?;
    let (sqrt, eig) = spectral_mat(base.as_mat(), SpectralFn::Sqrt)?;
    let isqrt = inv_sqrt_from(&eig);
    let inner = spectral_mat(&congruence_mat(v.as_mat(), &isqrt), SpectralFn::Exp)?.0;
    Ok(SpdMatrix::from_spd(congruence_mat(&inner, &sqrt)))
}

fn inv_sqrt_from(eig: &EigDecomposition) -> Mat {
    let values: Vec<f64> = effective_eigenvalues(SpectralFn::InvSqrt, eig)
        .into_iter()
        .map(|l| SpectralFn::InvSqrt.value(l))
        .collect();
    eig.recompose(&values)
}

/// `exp(½(log C1 + log C2))`.
pub fn log_euclidean_merge(c1: &SpdMatrix, c2: &SpdMatrix) -> Result<SpdMatrix> {
    same_dim(c1.dim(), c2.dim())?;
    let l1 = spectral_mat(c1.as_mat(), SpectralFn::Log)?.0;
    let l2 = spectral_mat(c2.as_mat(), SpectralFn::Log)?.0;
    let mean = (l1 + l2) * 0.5;
    Ok(SpdMatrix::from_spd(spectral_mat(&mean, SpectralFn::Exp)?.0))
}

/// Arithmetic mean of the matrix logarithms (the log of the log-Euclidean mean).
pub fn mean_log(cs: &[SpdMatrix]) -> Result<Mat> {
    let first = cs.first().ok_or(Error::EmptyInput)?;
    let dim = first.dim();
    let mut acc = Mat::zeros(dim, dim);
    for c in cs {
        same_dim(dim, c.dim())?;
        acc += spectral_mat(c.as_mat(), SpectralFn::Log)?.0;
    }
    Ok(acc / cs.len() as f64)
}

/// `exp(mean log Cᵢ)`.
pub fn log_euclidean_mean(cs: &[SpdMatrix]) -> Result<SpdMatrix> {
    let m = mean_log(cs)?;
    Ok(SpdMatrix::from_spd(spectral_mat(&m, SpectralFn::Exp)?.0))
}

/// Fréchet mean under AIRM (minimizer of the summed squared distances),
/// by fixed-point iteration started at the log-Euclidean mean.
///
/// Converged when the Riemannian gradient norm, measured in whitened
/// coordinates, drops below `tol`. The step is halved whenever the gradient
/// norm grows, which stops the plain iteration from cycling on widely spread
/// sets without moving the fixed point.
pub fn karcher_mean(cs: &[SpdMatrix], tol: f64, max_iter: usize) -> Result<SpdMatrix> {
    let mut mu = log_euclidean_mean(cs)?;
    if cs.len() == 1 {
        return Ok(cs[0].clone());
    }
    let n = cs.len() as f64;
    let mut grad_norm = f64::INFINITY;
    let mut step_size = 1.0;
    for _ in 0..max_iter {
        let (sqrt, eig) = spectral_mat(mu.as_mat(), SpectralFn::Sqrt)?;
        let isqrt = inv_sqrt_from(&eig);
        let dim = mu.dim();
        let mut t = Mat::zeros(dim, dim);
        for c in cs {
            t += spectral_mat(&congruence_mat(c.as_mat(), &isqrt), SpectralFn::Log)?.0;
        }
        t /= n;
        let norm = t.norm();
        if norm < tol {
            return Ok(mu);
        }
        if norm > grad_norm {
            step_size *= 0.5;
        }
        grad_norm = norm;
        let step = spectral_mat(&(t * step_size), SpectralFn::Exp)?.0;
        mu = SpdMatrix::from_spd(congruence_mat(&step, &sqrt));
    }
    Err(Error::KarcherNotConverged {
        iterations: max_iter,
        grad_norm,
        iterate: Box::new(mu),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{random_full_rank, random_spd, random_sym, random_sym_spectrum};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::E;

    fn rel(a: &Mat, b: &Mat) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn log_of_identity_and_diagonal() {
        assert_eq!(spd_log(&SpdMatrix::identity(3)).unwrap().as_mat(), &Mat::zeros(3, 3));
        let l = spd_log(&SpdMatrix::from_diagonal(&[E, E * E])).unwrap();
        assert!((l.as_mat() - Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0])).amax() < 1e-15);
    }

    #[test]
    fn exp_of_zero_and_diagonal() {
        assert_eq!(spd_exp(&SymMatrix::zeros(2)).unwrap().as_mat(), &Mat::identity(2, 2));
        let e = spd_exp(&SymMatrix::from_diagonal(&[1.0, -1.0])).unwrap();
        assert!((e.as_mat()[(0, 0)] - E).abs() < 1e-15);
        assert!((e.as_mat()[(1, 1)] - 1.0 / E).abs() < 1e-15);
    }

    #[test]
    fn exp_overflow_is_numerical_error() {
        let s = SymMatrix::from_diagonal(&[800.0, 0.0]);
        assert!(matches!(spd_exp(&s), Err(Error::Numerical(_))));
    }

    #[test]
    fn log_exp_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let c = random_spd(&mut rng, 4, 1e3);
            let back = spd_exp(&spd_log(&c).unwrap()).unwrap();
            assert!(rel(back.as_mat(), c.as_mat()) < 1e-8);
            let s = random_sym_spectrum(&mut rng, 4, -5.0, 5.0);
            let back = spd_log(&spd_exp(&s).unwrap()).unwrap();
            assert!(rel(back.as_mat(), s.as_mat()) < 1e-8);
        }
    }

    #[test]
    fn power_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = random_spd(&mut rng, 5, 100.0);
        assert!(rel(spd_power(&c, 1.0).unwrap().as_mat(), c.as_mat()) < 1e-12);
        let r = spd_power(&SpdMatrix::from_diagonal(&[4.0, 9.0]), 0.5).unwrap();
        assert!((r.as_mat() - Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0])).amax() < 1e-15);
        let w = spd_power(&c, -0.5).unwrap();
        let white = congruence_mat(c.as_mat(), w.as_mat());
        assert!((white - Mat::identity(5, 5)).norm() < 1e-8);
    }

    #[test]
    fn distance_examples() {
        let c = SpdMatrix::from_diagonal(&[2.0, 3.0]);
        assert!(airm_distance(&c, &c).unwrap() < 1e-12);
        let d = airm_distance(&SpdMatrix::identity(2), &SpdMatrix::from_diagonal(&[E * E, 1.0])).unwrap();
        assert!((d - 2.0).abs() < 1e-14);
        let err = airm_distance(&SpdMatrix::identity(2), &SpdMatrix::identity(3));
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn distance_is_congruence_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let a = random_spd(&mut rng, 6, 50.0);
            let b = random_spd(&mut rng, 6, 50.0);
            let w = random_full_rank(&mut rng, 6, 6);
            let d0 = airm_distance(&a, &b).unwrap();
            let d1 = airm_distance(
                &SpdMatrix::from_spd(congruence_mat(a.as_mat(), &w)),
                &SpdMatrix::from_spd(congruence_mat(b.as_mat(), &w)),
            )
            .unwrap();
            assert!((d0 - d1).abs() / d0 < 1e-8);
        }
    }

    #[test]
    fn log_exp_map_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = random_spd(&mut rng, 4, 20.0);
        assert!(log_map(&c, &c).unwrap().as_mat().amax() < 1e-12);
        let i = SpdMatrix::identity(4);
        assert!(rel(log_map(&i, &c).unwrap().as_mat(), spd_log(&c).unwrap().as_mat()) < 1e-14);
        assert!(rel(exp_map(&c, &SymMatrix::zeros(4)).unwrap().as_mat(), c.as_mat()) < 1e-12);
        let s = random_sym(&mut rng, 4, 1.0);
        assert!(rel(exp_map(&i, &s).unwrap().as_mat(), spd_exp(&s).unwrap().as_mat()) < 1e-14);
        for _ in 0..10 {
            let base = random_spd(&mut rng, 4, 20.0);
            let other = random_spd(&mut rng, 4, 20.0);
            let back = exp_map(&base, &log_map(&base, &other).unwrap()).unwrap();
            assert!(rel(back.as_mat(), other.as_mat()) < 1e-8);
            let v = random_sym(&mut rng, 4, 0.1);
            let again = log_map(&base, &exp_map(&base, &v).unwrap()).unwrap();
            assert!((again.frobenius_norm() - v.frobenius_norm()).abs() < 1e-8);
        }
    }

    #[test]
    fn congruence_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_spd(&mut rng, 2, 10.0);
        let same = congruence(&c, &Mat::identity(2, 2)).unwrap();
        assert_eq!(same.as_mat(), c.as_mat());
        let w = Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let out = congruence(&c, &w).unwrap();
        let m = c.as_mat();
        let expect = Mat::from_row_slice(2, 2, &[4.0 * m[(0, 0)], 2.0 * m[(0, 1)], 2.0 * m[(0, 1)], m[(1, 1)]]);
        assert!((out.as_mat() - expect).amax() < 1e-14);
        let big = random_spd(&mut rng, 22, 1e3);
        let w = random_full_rank(&mut rng, 22, 22);
        assert!(sym_eig(&congruence(&big, &w).unwrap().as_sym()).unwrap().min_eigenvalue() > 0.0);
    }

    #[test]
    fn rank_deficient_congruence_is_rejected() {
        let mut w = Mat::identity(3, 3);
        w.set_column(2, &w.column(1).clone_owned());
        let r = congruence(&SpdMatrix::identity(3), &w);
        assert!(matches!(r, Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn merge_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let c = random_spd(&mut rng, 3, 10.0);
        assert!(rel(log_euclidean_merge(&c, &c).unwrap().as_mat(), c.as_mat()) < 1e-12);
        let m = log_euclidean_merge(&SpdMatrix::identity(2), &SpdMatrix::from_diagonal(&[E * E, E * E])).unwrap();
        assert!((m.as_mat() - Mat::identity(2, 2) * E).amax() < 1e-14);
        let d = random_spd(&mut rng, 3, 10.0);
        let ab = log_euclidean_merge(&c, &d).unwrap();
        let ba = log_euclidean_merge(&d, &c).unwrap();
        assert!(rel(ab.as_mat(), ba.as_mat()) < 1e-10);
    }

    #[test]
    fn means_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = random_spd(&mut rng, 3, 10.0);
        assert!(rel(log_euclidean_mean(&[c.clone()]).unwrap().as_mat(), c.as_mat()) < 1e-12);
        assert!(rel(karcher_mean(&[c.clone()], 1e-10, 50).unwrap().as_mat(), c.as_mat()) < 1e-12);
        let m = log_euclidean_mean(&[
            SpdMatrix::from_diagonal(&[E * E, 1.0]),
            SpdMatrix::from_diagonal(&[1.0, E * E]),
        ])
        .unwrap();
        assert!((m.as_mat() - Mat::identity(2, 2) * E).amax() < 1e-14);
        assert!(matches!(log_euclidean_mean(&[]), Err(Error::EmptyInput)));
        let k = karcher_mean(
            &[
                SpdMatrix::from_diagonal(&[1.0, 4.0]),
                SpdMatrix::from_diagonal(&[4.0, 9.0]),
                SpdMatrix::from_diagonal(&[16.0, 1.0]),
            ],
            1e-12,
            100,
        )
        .unwrap();
        let g0 = (1.0f64 * 4.0 * 16.0).powf(1.0 / 3.0);
        let g1 = (4.0f64 * 9.0 * 1.0).powf(1.0 / 3.0);
        assert!((k.as_mat()[(0, 0)] - g0).abs() < 1e-10);
        assert!((k.as_mat()[(1, 1)] - g1).abs() < 1e-10);
    }

    #[test]
    fn karcher_reports_last_iterate() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cs: Vec<_> = (0..4).map(|_| random_spd(&mut rng, 3, 100.0)).collect();
        match karcher_mean(&cs, 0.0, 2) {
            Err(Error::KarcherNotConverged { iterate, iterations, .. }) => {
                assert_eq!(iterations, 2);
                assert_eq!(iterate.dim(), 3);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn distance_between_ill_conditioned_pair_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let a = random_spd(&mut rng, 12, 1e8);
            let b = random_spd(&mut rng, 12, 1e8);
            let (ab, ba) = (airm_distance(&a, &b).unwrap(), airm_distance(&b, &a).unwrap());
            assert!((ab - ba).abs() < 1e-8 * ab, "{ab} vs {ba}");
        }
    }
}
