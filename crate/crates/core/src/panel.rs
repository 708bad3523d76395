//! Panel data model, solver configuration and the penalized objective.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// A balanced panel: response `y` (n×T) and `p` covariate slices, each n×T.
///
/// The covariate tensor is stored covariate-major, so `x[j]` holds the
/// n×T matrix of the j-th regressor. An empty `x` is the no-covariate case.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    y: DMatrix<f64>,
    x: Vec<DMatrix<f64>>,
}

impl PanelData {
    pub fn new(y: DMatrix<f64>, x: Vec<DMatrix<f64>>) -> Result<Self> {
        let (n, t_len) = y.shape();
        if n == 0 || t_len == 0 {
            return Err(Error::InvalidPanel(format!("empty response matrix {n}x{t_len}")));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPanel("response contains non-finite entries".into()));
        }
        for (j, xj) in x.iter().enumerate() {
            if xj.shape() != (n, t_len) {
                return Err(Error::DimensionMismatch {
                    expected: format!("covariate {j} of shape {n}x{t_len}"),
                    found: format!("{}x{}", xj.nrows(), xj.ncols()),
                });
            }
            if xj.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidPanel(format!("covariate {j} contains non-finite entries")));
            }
        }
        Ok(Self { y, x })
    }

    pub fn without_covariates(y: DMatrix<f64>) -> Result<Self> {
        Self::new(y, Vec::new())
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn t_len(&self) -> usize {
        self.y.ncols()
    }

    pub fn p(&self) -> usize {
        self.x.len()
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn covariates(&self) -> &[DMatrix<f64>] {
        &self.x
    }

    pub fn covariate(&self, j: usize) -> &DMatrix<f64> {
        &self.x[j]
    }

    /// `X[i, t, j]`.
    pub fn x(&self, i: usize, t: usize, j: usize) -> f64 {
        self.x[j][(i, t)]
    }

    /// Number of observations `n·T`.
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// The n×T matrix with entries `X_{i,t}'θ`.
    pub fn linear_predictor(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n(), self.t_len());
        self.linear_predictor_into(theta, &mut out);
        out
    }

    pub(crate) fn linear_predictor_into(&self, theta: &DVector<f64>, out: &mut DMatrix<f64>) {
        out.fill(0.0);
        for (xj, &tj) in self.x.iter().zip(theta.iter()) {
            if tj != 0.0 {
                linalg::add_scaled(out, tj, xj);
            }
        }
    }

    /// `Σ_{i,t} X_{i,t} a_{i,t}`, a length-p vector.
    pub fn cross(&self, a: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.p(), self.x.iter().map(|xj| xj.dot(a)))
    }

    /// `Σ_{i,t} X_{i,t} X_{i,t}'`.
    pub fn gram(&self) -> DMatrix<f64> {
        let p = self.p();
        let mut g = DMatrix::zeros(p, p);
        for j in 0..p {
            for k in 0..=j {
                let v = self.x[j].dot(&self.x[k]);
                g[(j, k)] = v;
                g[(k, j)] = v;
            }
        }
        g
    }

    /// Residual matrix `Y − Xθ − Π`.
    pub fn residuals(&self, theta: &DVector<f64>, pi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_estimate(theta, pi)?;
        let mut r = &self.y - pi;
        for (xj, &tj) in self.x.iter().zip(theta.iter()) {
            if tj != 0.0 {
                linalg::add_scaled(&mut r, -tj, xj);
            }
        }
        Ok(r)
    }

    pub(crate) fn check_estimate(&self, theta: &DVector<f64>, pi: &DMatrix<f64>) -> Result<()> {
        if theta.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: format!("theta of length {}", self.p()),
                found: theta.len().to_string(),
            });
        }
        if pi.shape() != self.y.shape() {
            return Err(Error::DimensionMismatch {
                expected: format!("pi of shape {}x{}", self.n(), self.t_len()),
                found: format!("{}x{}", pi.nrows(), pi.ncols()),
            });
        }
        Ok(())
    }
}

/// Per-covariate scales `σ̂_j = sqrt(mean_{i,t} X²_{i,t,j})`, used as ℓ1 weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScales {
    pub sigma_hat: Vec<f64>,
}

impl ColumnScales {
    /// Unit weights, for an unweighted ℓ1 penalty.
    pub fn unit(p: usize) -> Self {
        Self { sigma_hat: vec![1.0; p] }
    }

    pub fn len(&self) -> usize {
        self.sigma_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma_hat.is_empty()
    }

    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.sigma_hat)
    }
}

/// Computes the empirical covariate scales of `data`.
pub fn compute_column_scales(data: &PanelData) -> Result<ColumnScales> {
    if data.p() == 0 {
        return Err(Error::InvalidPanel("column scales need at least one covariate".into()));
    }
    let count = data.len() as f64;
    let mut sigma_hat = Vec::with_capacity(data.p());
    for (j, xj) in data.covariates().iter().enumerate() {
        let mean_sq = xj.iter().map(|v| v * v).sum::<f64>() / count;
        if mean_sq <= 0.0 {
            return Err(Error::DegenerateColumn(j));
        }
        sigma_hat.push(mean_sq.sqrt());
    }
    Ok(ColumnScales { sigma_hat })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// Pinball (check) loss at level τ.
    #[default]
    Quantile,
    /// Squared loss; τ is ignored.
    Squared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tau: f64,
    pub nu1: f64,
    pub nu2: f64,
    /// ADMM penalty on the summed-loss scale. The augmented Lagrangian of the
    /// mean-loss objective uses `eta / nT`, so that unit-scale data are well
    /// conditioned at `eta = 1` regardless of the panel size. Residuals and
    /// stopping tolerances are measured on the same summed scale.
    pub eta: f64,
    pub max_iter: usize,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub loss: Loss,
    /// Forces Π = 0, giving ℓ1-penalized quantile regression.
    pub fix_pi_zero: bool,
    /// Optional entrywise bound `‖Π‖∞ ≤ C`.
    pub pi_inf_bound: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            nu1: 1e-5,
            nu2: 1e-4,
            eta: 1.0,
            max_iter: 5000,
            tol_abs: 1e-6,
            tol_rel: 1e-5,
            loss: Loss::Quantile,
            fix_pi_zero: false,
            pi_inf_bound: None,
        }
    }
}

impl SolverConfig {
    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_penalties(mut self, nu1: f64, nu2: f64) -> Self {
        self.nu1 = nu1;
        self.nu2 = nu2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau must lie in (0, 1), got {}", self.tau));
        }
        if !(self.nu1 >= 0.0 && self.nu1.is_finite()) {
            return bad(format!("nu1 must be finite and >= 0, got {}", self.nu1));
        }
        if !(self.nu2 >= 0.0 && self.nu2.is_finite()) {
            return bad(format!("nu2 must be finite and >= 0, got {}", self.nu2));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be finite and > 0, got {}", self.eta));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        if !(self.tol_abs > 0.0 && self.tol_rel > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if let Some(c) = self.pi_inf_bound {
            if !(c > 0.0) {
                return bad(format!("pi_inf_bound must be positive, got {c}"));
            }
        }
        Ok(())
    }
}

/// Result of a single penalized fit at one quantile level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileFit {
    pub tau: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub theta: DVector<f64>,
    pub pi: DMatrix<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub rank_estimate: usize,
    pub sparsity_estimate: usize,
    /// Singular values of `pi`, descending.
    pub singular_values: Vec<f64>,
}

impl QuantileFit {
    /// Fitted quantile surface `Xθ̂ + Π̂`.
    pub fn fitted_surface(&self, data: &PanelData) -> DMatrix<f64> {
        data.linear_predictor(&self.theta) + &self.pi
    }
}

/// Check loss `ρτ(r) = (τ − 1{r ≤ 0})·r`.
#[inline]
pub fn pinball_loss(residual: f64, tau: f64) -> f64 {
    let indicator = if residual <= 0.0 { 1.0 } else { 0.0 };
    (tau - indicator) * residual
}

/// Mean data-fit term `(1/nT)·Σ loss(r)`.
pub(crate) fn mean_loss(residuals: &DMatrix<f64>, loss: Loss, tau: f64) -> f64 {
    let total: f64 = match loss {
        Loss::Quantile => residuals.iter().map(|&r| pinball_loss(r, tau)).sum(),
        Loss::Squared => residuals.iter().map(|&r| r * r).sum(),
    };
    total / residuals.len() as f64
}

/// `(1/nT)·Σ loss(Y − Xθ − Π) + ν1·Σ_j σ̂_j|θ_j| + ν2·‖Π‖_*`.
pub fn penalized_objective(
    data: &PanelData,
    theta: &DVector<f64>,
    pi: &DMatrix<f64>,
    config: &SolverConfig,
    scales: &ColumnScales,
) -> Result<f64> {
    if scales.len() != data.p() {
        return Err(Error::LengthMismatch { left: scales.len(), right: data.p() });
    }
    let residuals = data.residuals(theta, pi)?;
    let fit = mean_loss(&residuals, config.loss, config.tau);
    let l1: f64 = theta.iter().zip(&scales.sigma_hat).map(|(t, w)| w * t.abs()).sum();
    let nuclear = if config.nu2 == 0.0 { 0.0 } else { linalg::nuclear_norm(pi)? };
    Ok(fit + config.nu1 * l1 + config.nu2 * nuclear)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn panel_with_column(values: &[f64], n: usize, t: usize) -> PanelData {
        let y = DMatrix::zeros(n, t);
        let x = DMatrix::from_row_slice(n, t, values);
        PanelData::new(y, vec![x]).unwrap()
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        let y = DMatrix::from_element(2, 2, f64::NAN);
        assert!(PanelData::without_covariates(y).is_err());
        assert!(PanelData::without_covariates(DMatrix::zeros(0, 3)).is_err());
        let bad_x = DMatrix::zeros(3, 2);
        assert!(PanelData::new(DMatrix::zeros(2, 2), vec![bad_x]).is_err());
    }

    #[test]
    fn column_scales_examples() {
        let s = compute_column_scales(&panel_with_column(&[1.0; 4], 2, 2)).unwrap();
        assert_eq!(s.sigma_hat, vec![1.0]);
        let s = compute_column_scales(&panel_with_column(&[1.0, -1.0, 1.0, -1.0], 2, 2)).unwrap();
        assert_eq!(s.sigma_hat, vec![1.0]);
        let s = compute_column_scales(&panel_with_column(&[1.0, 2.0, 3.0, 4.0], 2, 2)).unwrap();
        assert_relative_eq!(s.sigma_hat[0], (30.0f64 / 4.0).sqrt(), max_relative = 1e-12);
        assert_relative_eq!(s.sigma_hat[0], 2.7386, epsilon = 1e-4);
    }

    #[test]
    fn degenerate_column_is_rejected() {
        let err = compute_column_scales(&panel_with_column(&[0.0; 4], 2, 2)).unwrap_err();
        assert_eq!(err, Error::DegenerateColumn(0));
        let y = DMatrix::zeros(2, 2);
        assert!(compute_column_scales(&PanelData::without_covariates(y).unwrap()).is_err());
    }

    #[test]
    fn pinball_examples() {
        assert_eq!(pinball_loss(0.0, 0.5), 0.0);
        assert_relative_eq!(pinball_loss(2.0, 0.3), 0.6, epsilon = 1e-15);
        assert_relative_eq!(pinball_loss(-2.0, 0.3), 1.4, epsilon = 1e-15);
    }

    #[test]
    fn objective_examples() {
        let data = PanelData::new(DMatrix::zeros(2, 2), vec![DMatrix::identity(2, 2)]).unwrap();
        let scales = ColumnScales::unit(1);
        let cfg = SolverConfig::default().with_penalties(0.0, 1.0);
        let zero = penalized_objective(&data, &DVector::zeros(1), &DMatrix::zeros(2, 2), &cfg, &scales);
        assert_eq!(zero.unwrap(), 0.0);

        let value =
            penalized_objective(&data, &DVector::zeros(1), &DMatrix::identity(2, 2), &cfg, &scales).unwrap();
        assert_relative_eq!(value, 2.25, epsilon = 1e-12);
    }

    #[test]
    fn objective_dimension_mismatch() {
        let data = PanelData::new(DMatrix::zeros(2, 2), vec![DMatrix::identity(2, 2)]).unwrap();
        let cfg = SolverConfig::default();
        let err = penalized_objective(&data, &DVector::zeros(2), &DMatrix::zeros(2, 2), &cfg, &ColumnScales::unit(1));
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
        let err = penalized_objective(&data, &DVector::zeros(1), &DMatrix::zeros(3, 2), &cfg, &ColumnScales::unit(1));
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        assert!(SolverConfig::default().with_tau(1.0).validate().is_err());
        assert!(SolverConfig { eta: 0.0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { max_iter: 0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { pi_inf_bound: Some(-1.0), ..Default::default() }.validate().is_err());
    }

    fn small_problem() -> impl Strategy<Value = (PanelData, SolverConfig)> {
        (1usize..4, 1usize..4, 0usize..3).prop_flat_map(|(n, t, p)| {
            let len = n * t;
            (
                proptest::collection::vec(-3.0..3.0f64, len),
                proptest::collection::vec(-2.0..2.0f64, len * p),
                0.05..0.95f64,
                0.0..0.5f64,
                0.0..0.5f64,
            )
                .prop_map(move |(y, x, tau, nu1, nu2)| {
                    let y = DMatrix::from_vec(n, t, y);
                    let xs = x.chunks(len).map(|c| DMatrix::from_column_slice(n, t, c)).collect();
                    let cfg = SolverConfig::default().with_tau(tau).with_penalties(nu1, nu2);
                    (PanelData::new(y, xs).unwrap(), cfg)
                })
        })
    }

    proptest! {
        #[test]
        fn pinball_matches_positive_part_form(r in -1e3..1e3f64, tau in 0.001..0.999f64) {
            let expected = tau * r.max(0.0) + (1.0 - tau) * (-r).max(0.0);
            prop_assert!((pinball_loss(r, tau) - expected).abs() <= 1e-12 * (1.0 + r.abs()));
            prop_assert!(pinball_loss(r, tau) >= 0.0);
        }

        #[test]
        fn objective_is_convex_along_segments(
            (data, cfg) in small_problem(),
            seed in proptest::collection::vec(-2.0..2.0f64, 64),
            alpha in 0.0..1.0f64,
        ) {
            let (n, t, p) = (data.n(), data.t_len(), data.p());
            let scales = ColumnScales::unit(p);
            let take = |offset: usize, len: usize| (0..len).map(|k| seed[(offset + k) % seed.len()]).collect::<Vec<_>>();
            let th0 = DVector::from_vec(take(0, p));
            let th1 = DVector::from_vec(take(7, p));
            let pi0 = DMatrix::from_vec(n, t, take(13, n * t));
            let pi1 = DMatrix::from_vec(n, t, take(31, n * t));
            let f = |th: &DVector<f64>, pi: &DMatrix<f64>| penalized_objective(&data, th, pi, &cfg, &scales).unwrap();
            let mid = f(&(&th0 * alpha + &th1 * (1.0 - alpha)), &(&pi0 * alpha + &pi1 * (1.0 - alpha)));
            prop_assert!(mid <= alpha * f(&th0, &pi0) + (1.0 - alpha) * f(&th1, &pi1) + 1e-10);
            prop_assert!(f(&th0, &pi0) >= cfg.nu2 * linalg::nuclear_norm(&pi0).unwrap() - 1e-12);
        }

        #[test]
        fn scales_ignore_observation_order(values in proptest::collection::vec(-5.0..5.0f64, 6), shift in 0usize..6) {
            prop_assume!(values.iter().any(|v| *v != 0.0));
            let mut rotated = values.clone();
            rotated.rotate_left(shift);
            let a = compute_column_scales(&panel_with_column(&values, 2, 3)).unwrap();
            let b = compute_column_scales(&panel_with_column(&rotated, 3, 2)).unwrap();
            prop_assert!((a.sigma_hat[0] - b.sigma_hat[0]).abs() <= 1e-12 * a.sigma_hat[0]);
        }
    }
}
