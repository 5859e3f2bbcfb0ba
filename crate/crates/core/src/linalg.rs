//! Small dense helpers on top of `faer`.

use faer::Mat;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = Mat<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Unconjugated bilinear product x·y.
pub fn dot(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Hermitian inner product x†·y.
pub fn cdot(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

pub fn column(m: &CMat, j: usize) -> Vec<Complex64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

pub fn frobenius(m: &CMat) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

/// M·x for a dense matrix and a plain vector.
pub fn matvec(m: &CMat, x: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); m.nrows()];
    for (j, xj) in x.iter().enumerate() {
        for (i, o) in out.iter_mut().enumerate() {
            *o += m[(i, j)] * xj;
        }
    }
    out
}

/// Largest |A_ij − A_ji| relative to the largest entry.
pub fn symmetry_error(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut scale = 0.0f64;
    let mut err = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            scale = scale.max(m[(i, j)].norm());
            err = err.max((m[(i, j)] - m[(j, i)]).norm());
        }
    }
    if scale == 0.0 {
        0.0
    } else {
        err / scale
    }
}

/// ‖A − A†‖_F / ‖A‖_F.
pub fn hermiticity_error(m: &CMat) -> f64 {
    let n = m.nrows();
    let diff = Mat::from_fn(n, n, |i, j| m[(i, j)] - m[(j, i)].conj());
    let scale = frobenius(m);
    if scale == 0.0 {
        0.0
    } else {
        frobenius(&diff) / scale
    }
}

/// Eigenvalues of a real symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &Mat<f64>) -> Result<Vec<f64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    m.self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| Error::Eigendecomposition(format!("{e:?}")))
}
