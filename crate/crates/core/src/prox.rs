//! Closed-form proximal operators used by the ADMM updates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Relative floor below which a singular value counts as zero.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Scalar prox of the check loss: `argmin_v κ·ρτ(v) + ½(v − a)²`.
#[inline]
pub fn prox_pinball_scalar(a: f64, tau: f64, kappa: f64) -> f64 {
    let upper = tau * kappa;
    let lower = (1.0 - tau) * kappa;
    if a > upper {
        a - upper
    } else if a < -lower {
        a + lower
    } else {
        0.0
    }
}

/// Elementwise pinball prox with `κ = 1/(nT·η)` in the V-update.
pub fn prox_pinball(a: &DMatrix<f64>, tau: f64, kappa: f64) -> Result<DMatrix<f64>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("prox_pinball"));
    }
    Ok(a.map(|v| prox_pinball_scalar(v, tau, kappa)))
}

/// Scalar prox of `v²/nT` under penalty η.
#[inline]
pub fn prox_squared_scalar(a: f64, eta: f64, n_times_t: usize) -> f64 {
    a * eta / (eta + 2.0 / n_times_t as f64)
}

/// Elementwise minimizer of `(1/nT)v² + (η/2)(v − a)²`.
pub fn prox_squared(a: &DMatrix<f64>, eta: f64, n_times_t: usize) -> DMatrix<f64> {
    let factor = eta / (eta + 2.0 / n_times_t as f64);
    a * factor
}

#[inline]
pub fn soft_threshold_scalar(v: f64, threshold: f64) -> f64 {
    v.signum() * (v.abs() - threshold).max(0.0)
}

/// `sign(v_j)·max(|v_j| − t_j, 0)`.
pub fn soft_threshold(v: &DVector<f64>, thresholds: &DVector<f64>) -> Result<DVector<f64>> {
    if v.len() != thresholds.len() {
        return Err(Error::LengthMismatch { left: v.len(), right: thresholds.len() });
    }
    Ok(v.zip_map(thresholds, |x, t| if t == 0.0 { x } else { soft_threshold_scalar(x, t) }))
}

/// Output of [`singular_value_threshold`].
#[derive(Debug, Clone)]
pub struct SvtResult {
    pub matrix: DMatrix<f64>,
    /// Number of singular values strictly above the threshold.
    pub rank: usize,
    pub singular_values_before: Vec<f64>,
    pub singular_values_after: Vec<f64>,
}

/// Prox of `threshold·‖·‖_*`: shrinks every singular value of `m` by `threshold`.
pub fn singular_value_threshold(m: &DMatrix<f64>, threshold: f64) -> Result<SvtResult> {
    if !(threshold >= 0.0) {
        return Err(Error::InvalidConfig(format!("negative SVT threshold {threshold}")));
    }
    let svd = linalg::thin_svd(m)?;
    let floor = RANK_TOLERANCE * svd.s.first().copied().unwrap_or(0.0);
    let after: Vec<f64> = svd
        .s
        .iter()
        .map(|&s| {
            let shrunk = s - threshold;
            if shrunk > floor {
                shrunk
            } else {
                0.0
            }
        })
        .collect();
    let rank = after.iter().take_while(|&&s| s > 0.0).count();
    let matrix = if rank == 0 {
        DMatrix::zeros(m.nrows(), m.ncols())
    } else {
        linalg::recompose(&svd.u, &after[..rank], &svd.v)
    };
    Ok(SvtResult { matrix, rank, singular_values_before: svd.s, singular_values_after: after })
}
