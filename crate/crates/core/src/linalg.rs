//! Small dense helpers for self-adjoint matrix functions.
//!
//! Every matrix function on positive-definite input goes through a
//! self-adjoint eigendecomposition. Eigenvalues at or below zero are a
//! domain error; tiny positive ones are clamped to [`EIGEN_FLOOR`].

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;

pub const EIGEN_FLOOR: f64 = 1e-14;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn from_real(m: &DMatrix<f64>) -> CMat {
    m.map(c)
}

pub fn diag(values: &[f64]) -> CMat {
    let n = values.len();
    let mut m = CMat::zeros(n, n);
    for (i, v) in values.iter().enumerate() {
        m[(i, i)] = c(*v);
    }
    m
}

/// `(m + m*) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

pub fn is_hermitian(m: &CMat, tol: f64) -> bool {
    let scale = 1.0f64.max(m.norm());
    (m - m.adjoint()).norm() <= tol * scale
}

pub fn trace(m: &CMat) -> Complex64 {
    m.diagonal().iter().sum()
}

pub fn frob(m: &CMat) -> f64 {
    m.norm()
}

/// Eigendecomposition of the Hermitian part of `m`: eigenvalues ascending
/// are not guaranteed, eigenvectors are the columns of the unitary factor.
pub fn herm_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(hermitian_part(m));
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

/// `U f(Λ) U*` for a Hermitian matrix.
pub fn herm_apply(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, u) = herm_eigen(m);
    let n = vals.len();
    let mut d = CMat::zeros(n, n);
    for (i, v) in vals.iter().enumerate() {
        d[(i, i)] = c(f(*v));
    }
    &u * d * u.adjoint()
}

/// Positive-definite eigenvalues (clamped) or a domain error.
pub fn pd_eigen(m: &CMat) -> Result<(Vec<f64>, CMat)> {
    let (mut vals, u) = herm_eigen(m);
    for v in vals.iter_mut() {
        if !v.is_finite() || *v <= 0.0 {
            return Err(Error::Domain(format!(
                "matrix is not positive definite (eigenvalue {v:e})"
            )));
        }
        if *v < EIGEN_FLOOR {
            *v = EIGEN_FLOOR;
        }
    }
    Ok((vals, u))
}

pub fn pd_apply(m: &CMat, f: impl Fn(f64) -> f64) -> Result<CMat> {
    let (vals, u) = pd_eigen(m)?;
    let n = vals.len();
    let mut d = CMat::zeros(n, n);
    for (i, v) in vals.iter().enumerate() {
        d[(i, i)] = c(f(*v));
    }
    Ok(&u * d * u.adjoint())
}

pub fn pd_sqrt(m: &CMat) -> Result<CMat> {
    pd_apply(m, f64::sqrt)
}

pub fn pd_inv_sqrt(m: &CMat) -> Result<CMat> {
    pd_apply(m, |v| 1.0 / v.sqrt())
}

pub fn pd_log(m: &CMat) -> Result<CMat> {
    pd_apply(m, f64::ln)
}

pub fn pd_pow(m: &CMat, t: f64) -> Result<CMat> {
    pd_apply(m, |v| v.powf(t))
}

pub fn herm_exp(m: &CMat) -> CMat {
    herm_apply(m, f64::exp)
}

pub fn inverse(m: &CMat) -> Result<CMat> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Domain("singular matrix".into()))
}

pub fn det(m: &CMat) -> Complex64 {
    m.determinant()
}

/// `a b - b a`.
pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// Rescale a positive-definite matrix to determinant one and symmetrize.
pub fn normalize_unimodular(m: &CMat) -> CMat {
    let n = m.nrows() as f64;
    let h = hermitian_part(m);
    let d = det(&h).re;
    if d > 0.0 {
        h.scale(d.powf(-1.0 / n))
    } else {
        h
    }
}
