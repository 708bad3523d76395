//! Latent factors and loadings from an estimated low-rank matrix.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// `Π ≈ loadings · factorsᵀ`, where `factors` (T×r) has orthonormal columns
/// and the singular values are folded into `loadings` (n×r).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorDecomposition {
    pub loadings: DMatrix<f64>,
    pub factors: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub rank: usize,
}

impl FactorDecomposition {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.loadings * self.factors.transpose()
    }
}

/// Top-`rank` SVD of `pi`. Each factor column is signed so that its
/// largest-magnitude entry is positive.
pub fn extract_factors(pi: &DMatrix<f64>, rank: usize) -> Result<FactorDecomposition> {
    let max = pi.nrows().min(pi.ncols());
    if rank == 0 || rank > max {
        return Err(Error::RankTooLarge { requested: rank, max });
    }
    let svd = linalg::thin_svd(pi)?;
    let mut factors = svd.v.columns(0, rank).into_owned();
    let mut loadings = svd.u.columns(0, rank).into_owned();
    let singular_values = svd.s[..rank].to_vec();
    for k in 0..rank {
        let pivot = factors.column(k).iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        factors.column_mut(k).scale_mut(sign);
        loadings.column_mut(k).scale_mut(sign * singular_values[k]);
    }
    Ok(FactorDecomposition { loadings, factors, singular_values, rank })
}

/// Share of `Σσ²` carried by each component, in percent.
pub fn variance_explained(singular_values: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    if !(total > 0.0) {
        return Err(Error::AllZeroSpectrum);
    }
    Ok(singular_values.iter().map(|s| 100.0 * s * s / total).collect())
}

/// `min_O ‖a·O − b‖_F` over orthogonal `O`, attained at `O = U·Vᵀ` where `aᵀb = U·Σ·Vᵀ`.
pub fn procrustes_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", a.nrows(), a.ncols()),
            found: format!("{}x{}", b.nrows(), b.ncols()),
        });
    }
    if a.ncols() > a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: "no more columns than rows".into(),
            found: format!("{}x{}", a.nrows(), a.ncols()),
        });
    }
    let rotation = procrustes_rotation(a, b)?;
    Ok((a * rotation - b).norm())
}

/// The minimizing orthogonal matrix of [`procrustes_distance`].
pub fn procrustes_rotation(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = linalg::thin_svd(&(a.transpose() * b))?;
    Ok(&svd.u * svd.v.transpose())
}
