//! Scaled ADMM for pinball loss with weighted ℓ1 and nuclear-norm penalties.
//!
//! The splitting introduces slacks `V = W`, `W = Y − Xθ̃ − Z_Π`, `Z_Π = Π̃`,
//! `Z_θ = θ̃` and alternates between the block `(V, θ̃, Π̃)` and the block
//! `(Z_θ, Z_Π, W)`, followed by scaled dual ascent on the four constraints.
//! Every block update is available in closed form: the pinball prox for `V`,
//! a cached ridge-type solve for `θ̃`, singular value thresholding for `Π̃`,
//! soft thresholding for `Z_θ` and a 2×2 linear system for `(Z_Π, W)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::panel::{penalized_objective, ColumnScales, Loss, PanelData, QuantileFit, SolverConfig};
use crate::prox;
use crate::select::{estimate_rank, estimate_sparsity};

/// Cholesky factor of `Σ_{i,t} X_{i,t}X_{i,t}' + I_p`, shared by every fit on a dataset.
#[derive(Debug, Clone)]
pub struct GramCache {
    factor: Cholesky<f64, Dyn>,
}

impl GramCache {
    pub fn new(data: &PanelData) -> Result<Self> {
        let p = data.p();
        let system = data.gram() + DMatrix::identity(p, p);
        // G + I is positive definite, so this only fails on non-finite input.
        let factor = Cholesky::new(system).ok_or(Error::NonFiniteInput("gram factorization"))?;
        Ok(Self { factor })
    }

    pub fn dim(&self) -> usize {
        self.factor.l_dirty().nrows()
    }

    /// Solves `(G + I)·x = rhs`.
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(rhs)
    }
}

/// Primal, slack and scaled dual variables of the iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmState {
    pub theta: DVector<f64>,
    pub pi: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub z_theta: DVector<f64>,
    pub z_pi: DMatrix<f64>,
    pub u_v: DMatrix<f64>,
    pub u_w: DMatrix<f64>,
    pub u_pi: DMatrix<f64>,
    pub u_theta: DVector<f64>,
    /// Penalty the scaled duals refer to; `None` for a cold state.
    pub eta: Option<f64>,
}

impl AdmmState {
    pub fn zeros(n: usize, t_len: usize, p: usize) -> Self {
        let m = || DMatrix::zeros(n, t_len);
        Self {
            theta: DVector::zeros(p),
            pi: m(),
            v: m(),
            w: m(),
            z_theta: DVector::zeros(p),
            z_pi: m(),
            u_v: m(),
            u_w: m(),
            u_pi: m(),
            u_theta: DVector::zeros(p),
            eta: None,
        }
    }

    /// Re-expresses the scaled duals for penalty `eta`.
    fn rescale_duals(&mut self, eta: f64) {
        if let Some(old) = self.eta {
            if old != eta {
                let f = old / eta;
                self.u_v *= f;
                self.u_w *= f;
                self.u_pi *= f;
                self.u_theta *= f;
            }
        }
        self.eta = Some(eta);
    }

    pub fn for_data(data: &PanelData) -> Self {
        Self::zeros(data.n(), data.t_len(), data.p())
    }

    fn matches(&self, data: &PanelData) -> bool {
        self.theta.len() == data.p() && self.pi.shape() == data.y().shape()
    }

    fn is_finite(&self) -> bool {
        let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
        finite(&self.pi)
            && finite(&self.w)
            && finite(&self.v)
            && finite(&self.z_pi)
            && finite(&self.u_w)
            && self.theta.iter().chain(self.z_theta.iter()).all(|v| v.is_finite())
    }
}

/// Stacked primal and dual residual norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
}

/// Norm of the constraint violations of `state` and η times the change of
/// `(W, Z_Π, Z_θ)` relative to `previous`.
pub fn admm_residuals(state: &AdmmState, previous: &AdmmState, data: &PanelData, eta: f64) -> Residuals {
    let xt = data.linear_predictor(&state.theta);
    let primal = primal_residual(state, &xt, data.y());
    let dual = dual_change(state, &previous.w, &previous.z_pi, &previous.z_theta, eta);
    Residuals { primal, dual }
}

fn primal_residual(s: &AdmmState, xt: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let mut sq = 0.0;
    for k in 0..y.len() {
        let a = s.v[k] - s.w[k];
        let b = s.w[k] - y[k] + xt[k] + s.z_pi[k];
        let c = s.z_pi[k] - s.pi[k];
        sq += a * a + b * b + c * c;
    }
    sq += (&s.z_theta - &s.theta).norm_squared();
    sq.sqrt()
}

fn dual_change(
    s: &AdmmState,
    prev_w: &DMatrix<f64>,
    prev_z_pi: &DMatrix<f64>,
    prev_z_theta: &DVector<f64>,
    eta: f64,
) -> f64 {
    let sq = (&s.w - prev_w).norm_squared()
        + (&s.z_pi - prev_z_pi).norm_squared()
        + (&s.z_theta - prev_z_theta).norm_squared();
    eta * sq.sqrt()
}

/// Exact minimizer of `‖W + Z + Ã‖² + ‖W + B̃‖² + ‖Z + C̃‖²` over `(Z, W)`.
///
/// Returns `(Z, W)`.
pub fn solve_zw_joint(
    a_tilde: &DMatrix<f64>,
    b_tilde: &DMatrix<f64>,
    c_tilde: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if a_tilde.shape() != b_tilde.shape() || a_tilde.shape() != c_tilde.shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{:?}", a_tilde.shape()),
            found: format!("{:?} and {:?}", b_tilde.shape(), c_tilde.shape()),
        });
    }
    let z = a_tilde.zip_zip_map(b_tilde, c_tilde, |a, b, c| (-a - 2.0 * c + b) / 3.0);
    let w = DMatrix::from_fn(a_tilde.nrows(), a_tilde.ncols(), |i, j| {
        -a_tilde[(i, j)] - c_tilde[(i, j)] - 2.0 * z[(i, j)]
    });
    Ok((z, w))
}

/// Re-expresses a warm start's duals for `config.eta`.
fn start_eta(config: &SolverConfig, s: &mut AdmmState) -> f64 {
    s.rescale_duals(config.eta);
    config.eta
}

/// Convergence threshold `tol_abs·√N + tol_rel·scale`.
fn tolerance(config: &SolverConfig, elements: usize, scale: f64) -> f64 {
    config.tol_abs * (elements as f64).sqrt() + config.tol_rel * scale
}

/// Reusable solver for one dataset: owns the ℓ1 weights and the Gram factor.
#[derive(Debug, Clone)]
pub struct Solver<'a> {
    data: &'a PanelData,
    scales: ColumnScales,
    gram: Option<GramCache>,
}

impl<'a> Solver<'a> {
    pub fn new(data: &'a PanelData, scales: ColumnScales) -> Result<Self> {
        if scales.len() != data.p() {
            return Err(Error::LengthMismatch { left: scales.len(), right: data.p() });
        }
        let gram = if data.p() > 0 { Some(GramCache::new(data)?) } else { None };
        Ok(Self { data, scales, gram })
    }

    /// Uses a precomputed Gram factor instead of building a new one.
    pub fn with_gram(data: &'a PanelData, scales: ColumnScales, gram: GramCache) -> Result<Self> {
        if scales.len() != data.p() {
            return Err(Error::LengthMismatch { left: scales.len(), right: data.p() });
        }
        if gram.dim() != data.p() {
            return Err(Error::LengthMismatch { left: gram.dim(), right: data.p() });
        }
        Ok(Self { data, scales, gram: Some(gram) })
    }

    pub fn data(&self) -> &PanelData {
        self.data
    }

    pub fn scales(&self) -> &ColumnScales {
        &self.scales
    }

    /// Cold-started fit.
    pub fn fit(&self, config: &SolverConfig) -> Result<QuantileFit> {
        Ok(self.fit_from(config, AdmmState::for_data(self.data))?.0)
    }

    /// Runs the iteration from `start` and returns the fit with the final state,
    /// which can seed the next fit on a tuning path.
    pub fn fit_from(&self, config: &SolverConfig, start: AdmmState) -> Result<(QuantileFit, AdmmState)> {
        config.validate()?;
        if !start.matches(self.data) {
            return Err(Error::DimensionMismatch {
                expected: format!("state for {}x{}x{}", self.data.n(), self.data.t_len(), self.data.p()),
                found: format!("{}x{}x{}", start.pi.nrows(), start.pi.ncols(), start.theta.len()),
            });
        }
        match &self.gram {
            None => self.run_no_covariates(config, start),
            Some(gram) => self.run(config, gram, start),
        }
    }

    fn run(&self, config: &SolverConfig, gram: &GramCache, mut s: AdmmState) -> Result<(QuantileFit, AdmmState)> {
        let data = self.data;
        let y = data.y();
        let (n, t_len, p) = (data.n(), data.t_len(), data.p());
        let nt = n * t_len;
        // Iterates in the units of the summed loss: the normalized problem's
        // penalty parameter is `eta / nT`.
        let eta = start_eta(config, &mut s);
        let kappa = 1.0 / eta;
        let l1_thresholds = self.scales.as_vector() * (config.nu1 * nt as f64 / eta);
        let svt_threshold = config.nu2 * nt as f64 / eta;
        let elements = 3 * nt + p;
        let y_norm = y.norm();

        if config.fix_pi_zero {
            s.pi.fill(0.0);
            s.z_pi.fill(0.0);
            s.u_pi.fill(0.0);
        }

        let mut xt = DMatrix::zeros(n, t_len);
        let mut spectrum: Vec<f64> = Vec::new();
        let mut residuals = Residuals { primal: f64::INFINITY, dual: f64::INFINITY };
        let mut converged = false;
        let mut iterations = 0;

        for iter in 1..=config.max_iter {
            iterations = iter;
            let prev_w = s.w.clone();
            let prev_z_pi = s.z_pi.clone();
            let prev_z_theta = s.z_theta.clone();

            // V-update.
            let target = &s.w - &s.u_v;
            s.v = match config.loss {
                Loss::Quantile => target.map(|a| prox::prox_pinball_scalar(a, config.tau, kappa)),
                Loss::Squared => prox::prox_squared(&target, eta / nt as f64, nt),
            };

            // θ̃-update with A = W + Z_Π + U_W − Y.
            let a = &s.w + &s.z_pi + &s.u_w - y;
            let rhs = -data.cross(&a) + &s.z_theta + &s.u_theta;
            s.theta = gram.solve(&rhs);

            // Π̃-update.
            if !config.fix_pi_zero {
                let svt = prox::singular_value_threshold(&(&s.z_pi + &s.u_pi), svt_threshold)?;
                s.pi = svt.matrix;
                spectrum = svt.singular_values_after;
                if let Some(bound) = config.pi_inf_bound {
                    s.pi.apply(|v| *v = v.clamp(-bound, bound));
                }
            }

            // Z_θ-update.
            s.z_theta = prox::soft_threshold(&(&s.theta - &s.u_theta), &l1_thresholds)?;

            // Joint (Z_Π, W)-update.
            data.linear_predictor_into(&s.theta, &mut xt);
            let a_tilde = -y + &xt + &s.u_w;
            let b_tilde = -&s.v - &s.u_v;
            if config.fix_pi_zero {
                s.w = (&a_tilde + &b_tilde) * -0.5;
            } else {
                let c_tilde = -&s.pi + &s.u_pi;
                let (z_pi, w) = solve_zw_joint(&a_tilde, &b_tilde, &c_tilde)?;
                s.z_pi = z_pi;
                s.w = w;
            }

            // Scaled dual ascent.
            s.u_v += &s.v - &s.w;
            for k in 0..nt {
                s.u_w[k] += s.w[k] - y[k] + xt[k] + s.z_pi[k];
            }
            if !config.fix_pi_zero {
                s.u_pi += &s.z_pi - &s.pi;
            }
            s.u_theta += &s.z_theta - &s.theta;

            residuals = Residuals {
                primal: primal_residual(&s, &xt, y),
                dual: dual_change(&s, &prev_w, &prev_z_pi, &prev_z_theta, eta),
            };
            if !residuals.primal.is_finite() || !residuals.dual.is_finite() || !s.is_finite() {
                return Err(Error::NonFiniteIterate { iteration: iter });
            }

            let primal_scale = [s.v.norm(), s.w.norm(), s.pi.norm(), s.z_pi.norm(), xt.norm(), y_norm]
                .into_iter()
                .fold(s.theta.norm().max(s.z_theta.norm()), f64::max);
            let dual_scale = eta
                * [s.u_v.norm(), s.u_w.norm(), s.u_pi.norm(), s.u_theta.norm()].into_iter().fold(0.0, f64::max);
            let (primal_tol, dual_tol) =
                (tolerance(config, elements, primal_scale), tolerance(config, elements, dual_scale));
            if residuals.primal <= primal_tol && residuals.dual <= dual_tol {
                converged = true;
                break;
            }
        }

        if config.fix_pi_zero {
            spectrum = vec![0.0; n.min(t_len)];
        } else if config.pi_inf_bound.is_some() || spectrum.is_empty() {
            spectrum = linalg::singular_values(&s.pi)?;
        }
        log::debug!(
            "admm fit tau={} nu1={:e} nu2={:e}: {} iterations, converged={}, primal={:.3e}, dual={:.3e}",
            config.tau,
            config.nu1,
            config.nu2,
            iterations,
            converged,
            residuals.primal,
            residuals.dual
        );
        let fit = self.finish(config, s.z_theta.clone(), s.pi.clone(), spectrum, iterations, converged, residuals)?;
        Ok((fit, s))
    }

    /// The covariate-free iteration: Π̃ takes the loss, Z_Π the nuclear penalty.
    fn run_no_covariates(&self, config: &SolverConfig, mut s: AdmmState) -> Result<(QuantileFit, AdmmState)> {
        let y = self.data.y();
        let nt = y.len();
        let eta = start_eta(config, &mut s);
        let kappa = 1.0 / eta;
        let svt_threshold = config.nu2 * nt as f64 / eta;
        let y_norm = y.norm();
        let mut spectrum = Vec::new();
        let mut residuals = Residuals { primal: f64::INFINITY, dual: f64::INFINITY };
        let mut converged = false;
        let mut iterations = 0;

        for iter in 1..=config.max_iter {
            iterations = iter;
            let prev_z = s.z_pi.clone();

            let target = y - &s.z_pi + &s.u_pi;
            let resid = match config.loss {
                Loss::Quantile => target.map(|a| prox::prox_pinball_scalar(a, config.tau, kappa)),
                Loss::Squared => prox::prox_squared(&target, eta / nt as f64, nt),
            };
            s.pi = y - resid;

            let svt = prox::singular_value_threshold(&(&s.pi + &s.u_pi), svt_threshold)?;
            s.z_pi = svt.matrix;
            spectrum = svt.singular_values_after;
            if let Some(bound) = config.pi_inf_bound {
                s.z_pi.apply(|v| *v = v.clamp(-bound, bound));
            }

            s.u_pi += &s.pi - &s.z_pi;

            residuals = Residuals {
                primal: (&s.pi - &s.z_pi).norm(),
                dual: eta * (&s.z_pi - &prev_z).norm(),
            };
            if !residuals.primal.is_finite() || !residuals.dual.is_finite() {
                return Err(Error::NonFiniteIterate { iteration: iter });
            }
            let primal_scale = s.pi.norm().max(s.z_pi.norm()).max(y_norm);
            let dual_scale = eta * s.u_pi.norm();
            let (primal_tol, dual_tol) = (tolerance(config, nt, primal_scale), tolerance(config, nt, dual_scale));
            if residuals.primal <= primal_tol && residuals.dual <= dual_tol {
                converged = true;
                break;
            }
        }

        if config.pi_inf_bound.is_some() || spectrum.is_empty() {
            spectrum = linalg::singular_values(&s.z_pi)?;
        }
        let fit = self.finish(config, DVector::zeros(0), s.z_pi.clone(), spectrum, iterations, converged, residuals)?;
        Ok((fit, s))
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        config: &SolverConfig,
        theta: DVector<f64>,
        pi: DMatrix<f64>,
        singular_values: Vec<f64>,
        iterations: usize,
        converged: bool,
        residuals: Residuals,
    ) -> Result<QuantileFit> {
        let mut effective = config.clone();
        if config.fix_pi_zero {
            effective.nu2 = 0.0;
        }
        let objective = penalized_objective(self.data, &theta, &pi, &effective, &self.scales)?;
        Ok(QuantileFit {
            tau: config.tau,
            nu1: config.nu1,
            nu2: effective.nu2,
            rank_estimate: estimate_rank(&singular_values),
            sparsity_estimate: estimate_sparsity(&theta),
            theta,
            pi,
            objective,
            iterations,
            converged,
            primal_residual: residuals.primal,
            dual_residual: residuals.dual,
            singular_values,
        })
    }
}

/// Fits the penalized model once from a zero start.
///
/// Panels without covariates are routed to [`fit_no_covariates`].
pub fn fit(data: &PanelData, config: &SolverConfig, scales: &ColumnScales) -> Result<QuantileFit> {
    Solver::new(data, scales.clone())?.fit(config)
}

/// Fits `(1/nT)·Σρτ(Y − Π) + ν2‖Π‖_*`; `ν1` is ignored.
pub fn fit_no_covariates(y: &DMatrix<f64>, config: &SolverConfig) -> Result<QuantileFit> {
    let data = PanelData::without_covariates(y.clone())?;
    Solver::new(&data, ColumnScales::unit(0))?.fit(config)
}
