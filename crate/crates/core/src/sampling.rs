//! Seeded random matrix samplers shared by the synthetic generator and tests.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::spd::{congruence_mat, Mat, SpdMatrix, SymMatrix};

pub fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Haar-ish random orthogonal matrix (QR of a Gaussian matrix, sign-fixed).
pub fn random_orthogonal(rng: &mut impl Rng, dim: usize) -> Mat {
    let qr = gaussian(rng, dim, dim).qr();
    let (mut q, r) = qr.unpack();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Symmetric matrix with i.i.d. N(0, scale²) upper-triangle entries.
pub fn random_sym(rng: &mut impl Rng, dim: usize, scale: f64) -> SymMatrix {
    let g = gaussian(rng, dim, dim);
    let mut m = Mat::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            m[(i, j)] = scale * g[(i, j)];
            m[(j, i)] = scale * g[(i, j)];
        }
    }
    SymMatrix::new(m).expect("finite")
}

/// Random SPD matrix with largest eigenvalue 1 and condition number `cond`.
pub fn random_spd(rng: &mut impl Rng, dim: usize, cond: f64) -> SpdMatrix {
    let q = random_orthogonal(rng, dim);
    let mut eig: Vec<f64> = (0..dim).map(|_| cond.powf(-rng.random::<f64>())).collect();
    if dim >= 2 {
        eig[0] = 1.0;
        eig[dim - 1] = 1.0 / cond;
    }
    let d = Mat::from_diagonal(&nalgebra::DVector::from_vec(eig));
    SpdMatrix::from_spd(congruence_mat(&d, &q.transpose()))
}

/// `rows×cols` matrix with singular values in [0.5, 2], hence full rank.
pub fn random_full_rank(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    let u = random_orthogonal(rng, rows);
    let v = random_orthogonal(rng, cols);
    let mut s = Mat::zeros(rows, cols);
    for i in 0..rows.min(cols) {
        s[(i, i)] = rng.random_range(0.5..2.0);
    }
    u * s * v.transpose()
}

/// Symmetric matrix `Q diag(λ) Qᵀ` with eigenvalues uniform in `[lo, hi]`.
pub fn random_sym_spectrum(rng: &mut impl Rng, dim: usize, lo: f64, hi: f64) -> SymMatrix {
    let q = random_orthogonal(rng, dim);
    let eig: Vec<f64> = (0..dim).map(|_| rng.random_range(lo..=hi)).collect();
    let d = Mat::from_diagonal(&nalgebra::DVector::from_vec(eig));
    SymMatrix::new(congruence_mat(&d, &q.transpose())).expect("finite")
}
