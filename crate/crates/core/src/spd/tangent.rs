use std::f64::consts::SQRT_2;

use super::{Mat, SymMatrix};
use crate::error::{Error, Result};

/// Upper-triangular coordinates of a symmetric matrix, off-diagonals weighted by √2
/// so that the Euclidean norm equals the Frobenius norm.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub dim: usize,
    pub coords: Vec<f64>,
}

impl TangentVector {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != tangent_len(dim) {
            return Err(Error::Shape(format!(
                "tangent vector for dim {dim} needs {} coordinates, got {}",
                tangent_len(dim),
                coords.len()
            )));
        }
        Ok(Self { dim, coords })
    }

    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

pub fn tangent_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Row-major upper triangle (including diagonal) of a square matrix.
pub fn vec_upper_mat(m: &Mat) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(tangent_len(n));
    for i in 0..n {
        out.push(m[(i, i)]);
        for j in i + 1..n {
            out.push(SQRT_2 * m[(i, j)]);
        }
    }
    out
}

pub fn unvec_upper_mat(dim: usize, coords: &[f64]) -> Mat {
    debug_assert_eq!(coords.len(), tangent_len(dim));
    let mut m = Mat::zeros(dim, dim);
    let mut k = 0;
    for i in 0..dim {
        m[(i, i)] = coords[k];
        k += 1;
        for j in i + 1..dim {
            let v = coords[k] / SQRT_2;
            m[(i, j)] = v;
            m[(j, i)] = v;
            k += 1;
        }
    }
    m
}

pub fn vec_upper(s: &SymMatrix) -> TangentVector {
    TangentVector {
        dim: s.dim(),
        coords: vec_upper_mat(s.as_mat()),
    }
}

pub fn unvec_upper(z: &TangentVector) -> Result<SymMatrix> {
    if z.coords.len() != tangent_len(z.dim) || z.dim == 0 {
        return Err(Error::Shape(format!(
            "tangent vector for dim {} needs {} coordinates, got {}",
            z.dim,
            tangent_len(z.dim),
            z.coords.len()
        )));
    }
    Ok(SymMatrix::from_symmetric(unvec_upper_mat(z.dim, &z.coords)))
}
