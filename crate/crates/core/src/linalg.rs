//! Dense SVD helpers backed by faer.

use faer::MatRef;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Thin SVD `m = u·diag(s)·vᵀ` with `s` non-increasing.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

fn as_faer(m: &DMatrix<f64>) -> MatRef<'_, f64> {
    MatRef::from_column_major_slice(m.as_slice(), m.nrows(), m.ncols())
}

fn to_nalgebra(m: MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn thin_svd(m: &DMatrix<f64>) -> Result<ThinSvd> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("svd"));
    }
    let svd = as_faer(m).thin_svd().map_err(|_| Error::SvdFailure)?;
    let s = svd.S().column_vector().iter().copied().collect();
    Ok(ThinSvd { u: to_nalgebra(svd.U()), s, v: to_nalgebra(svd.V()) })
}

pub fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("svd"));
    }
    as_faer(m).singular_values().map_err(|_| Error::SvdFailure)
}

pub fn nuclear_norm(m: &DMatrix<f64>) -> Result<f64> {
    Ok(singular_values(m)?.iter().sum())
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> Result<f64> {
    Ok(singular_values(m)?.first().copied().unwrap_or(0.0))
}

/// `out += alpha·x`, elementwise.
pub(crate) fn add_scaled(out: &mut DMatrix<f64>, alpha: f64, x: &DMatrix<f64>) {
    debug_assert_eq!(out.shape(), x.shape());
    for (o, v) in out.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *o += alpha * v;
    }
}

/// `u[:, ..k]·diag(weights)·v[:, ..k]ᵀ` for the first `weights.len()` triplets.
pub(crate) fn recompose(u: &DMatrix<f64>, weights: &[f64], v: &DMatrix<f64>) -> DMatrix<f64> {
    let k = weights.len();
    let mut scaled = u.columns(0, k).into_owned();
    for (mut col, &w) in scaled.column_iter_mut().zip(weights) {
        col *= w;
    }
    scaled * v.columns(0, k).transpose()
}
