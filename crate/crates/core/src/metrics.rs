//! Evaluation measures and the Monte Carlo driver.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::Solver;
use crate::error::{Error, Result};
use crate::panel::{compute_column_scales, Loss, QuantileFit, SolverConfig};
use crate::select::{default_c1, estimate_sparsity, fit_grid, select_from_fits, GridFit, TuningGrid};
use crate::sim::{generate, Design, DesignSpec, SimInstance};

/// `(1/nT)·Σ (true − est)²`.
pub fn quantile_error(true_surface: &DMatrix<f64>, est_surface: &DMatrix<f64>) -> Result<f64> {
    if true_surface.shape() != est_surface.shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{:?}", true_surface.shape()),
            found: format!("{:?}", est_surface.shape()),
        });
    }
    Ok((true_surface - est_surface).norm_squared() / true_surface.len() as f64)
}

/// `‖θ̂ − θ‖² / 10⁻⁴`.
pub fn theta_error_scaled(theta_hat: &DVector<f64>, theta_true: &DVector<f64>) -> Result<f64> {
    if theta_hat.len() != theta_true.len() {
        return Err(Error::LengthMismatch { left: theta_hat.len(), right: theta_true.len() });
    }
    Ok((theta_hat - theta_true).norm_squared() / 1e-4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportRecovery {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Compares supports using the same zero rule as the sparsity estimate.
pub fn support_recovery(theta_hat: &DVector<f64>, theta_true: &DVector<f64>) -> Result<SupportRecovery> {
    if theta_hat.len() != theta_true.len() {
        return Err(Error::LengthMismatch { left: theta_hat.len(), right: theta_true.len() });
    }
    let support = |v: &DVector<f64>| {
        let floor = 1e-8 * v.amax().max(1.0);
        v.iter().map(|x| x.abs() > floor).collect::<Vec<_>>()
    };
    let (hat, truth) = (support(theta_hat), support(theta_true));
    debug_assert_eq!(hat.iter().filter(|b| **b).count(), estimate_sparsity(theta_hat));
    let mut out = SupportRecovery { true_positives: 0, false_positives: 0, false_negatives: 0 };
    for (h, t) in hat.into_iter().zip(truth) {
        match (h, t) {
            (true, true) => out.true_positives += 1,
            (true, false) => out.false_positives += 1,
            (false, true) => out.false_negatives += 1,
            (false, false) => {}
        }
    }
    Ok(out)
}

/// Competing estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Pinball loss with ℓ1 and nuclear-norm penalties.
    L1NnQr,
    /// Squared loss with ℓ1 and nuclear-norm penalties.
    L1NnLs,
    /// ℓ1-penalized quantile regression without the latent matrix.
    L1Qr,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::L1NnQr => "l1-NN-QR",
            Method::L1NnLs => "l1-NN-LS",
            Method::L1Qr => "l1-QR",
        }
    }

    fn configure(self, base: &SolverConfig) -> SolverConfig {
        let mut cfg = base.clone();
        match self {
            Method::L1NnQr => cfg.loss = Loss::Quantile,
            Method::L1NnLs => cfg.loss = Loss::Squared,
            Method::L1Qr => {
                cfg.loss = Loss::Quantile;
                cfg.fix_pi_zero = true;
            }
        }
        cfg
    }

    /// ℓ1-QR ignores ν2, so only one ν2 value is fitted for it.
    fn grid(self, grid: &TuningGrid) -> TuningGrid {
        match self {
            Method::L1Qr => TuningGrid { nu1_values: grid.nu1_values.clone(), nu2_values: vec![grid.nu2_values[0]] },
            _ => grid.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tuning {
    /// Per replication, the grid point minimizing each metric separately.
    Oracle,
    /// The modified-BIC minimizer.
    Bic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Estimator {
    pub method: Method,
    pub tuning: Tuning,
}

impl Estimator {
    pub fn new(method: Method, tuning: Tuning) -> Self {
        Self { method, tuning }
    }

    pub fn label(&self) -> String {
        match self.tuning {
            Tuning::Oracle => self.method.label().to_string(),
            Tuning::Bic => format!("BIC-{}", self.method.label()),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "l1nnqr" => Ok(Method::L1NnQr),
            "l1nnls" => Ok(Method::L1NnLs),
            "l1qr" => Ok(Method::L1Qr),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

impl Estimator {
    /// Parses `l1nnqr`, `bic-l1nnqr`, …; bare names take `default_tuning`.
    pub fn parse(s: &str, default_tuning: Tuning) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.strip_prefix("bic-").or_else(|| lower.strip_prefix("bic_")) {
            Some(rest) => Ok(Self::new(rest.parse()?, Tuning::Bic)),
            None => Ok(Self::new(lower.parse()?, default_tuning)),
        }
    }
}

/// Aggregated Monte Carlo results for one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub method: String,
    pub design: Design,
    pub n: usize,
    pub p: usize,
    pub t_len: usize,
    /// Replications that produced a usable fit.
    pub reps: usize,
    pub failed_reps: usize,
    pub mean_theta_err_scaled: f64,
    pub mean_quantile_err: f64,
    pub per_rep_theta_err_scaled: Vec<f64>,
    pub per_rep_quantile_err: Vec<f64>,
}

impl McReport {
    fn from_values(estimator: &Estimator, spec: &DesignSpec, values: Vec<Option<(f64, f64)>>) -> Self {
        let failed_reps = values.iter().filter(|v| v.is_none()).count();
        let (theta, quant): (Vec<f64>, Vec<f64>) = values.into_iter().flatten().unzip();
        let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
        if failed_reps > 0 {
            log::warn!("{}: {failed_reps} replication(s) excluded after solver failures", estimator.label());
        }
        Self {
            method: estimator.label(),
            design: spec.design,
            n: spec.n,
            p: spec.p,
            t_len: spec.t_len,
            reps: theta.len(),
            failed_reps,
            mean_theta_err_scaled: mean(&theta),
            mean_quantile_err: mean(&quant),
            per_rep_theta_err_scaled: theta,
            per_rep_quantile_err: quant,
        }
    }
}

/// Options for [`run_estimators`].
#[derive(Debug, Clone)]
pub struct McOptions {
    pub grid: TuningGrid,
    pub reps: usize,
    pub config: SolverConfig,
    /// Defaults to `log²(nT)`.
    pub c1: Option<f64>,
    pub warm_start: bool,
}

impl McOptions {
    pub fn new(grid: TuningGrid, reps: usize) -> Self {
        Self { grid, reps, config: SolverConfig::default(), c1: None, warm_start: true }
    }
}

fn fit_metrics(instance: &SimInstance, fit: &QuantileFit) -> Result<(f64, f64)> {
    let theta = theta_error_scaled(&fit.theta, &instance.theta_true)?;
    let quant = quantile_error(&instance.true_median_surface, &fit.fitted_surface(&instance.data))?;
    Ok((theta, quant))
}

/// Metrics for every estimator on one replication; `None` marks a failure.
fn run_replication(
    spec: &DesignSpec,
    estimators: &[Estimator],
    options: &McOptions,
) -> Result<Vec<Option<(f64, f64)>>> {
    let instance = generate(spec)?;
    let data = &instance.data;
    let scales = compute_column_scales(data)?;
    let solver = Solver::new(data, scales)?;
    let c1 = options.c1.unwrap_or_else(|| default_c1(data.n(), data.t_len()));

    let mut out = vec![None; estimators.len()];
    let mut methods: Vec<Method> = estimators.iter().map(|e| e.method).collect();
    methods.dedup();
    methods.sort_by_key(|m| *m as u8);
    methods.dedup();

    for method in methods {
        let cfg = method.configure(&options.config);
        let fits: Vec<GridFit> = fit_grid(&solver, &method.grid(&options.grid), &cfg, options.warm_start);

        let scored: Vec<(f64, f64)> = fits
            .iter()
            .filter_map(|g| g.fit.as_ref().ok().filter(|f| f.converged))
            .map(|f| fit_metrics(&instance, f))
            .collect::<Result<_>>()?;
        let oracle = (!scored.is_empty()).then(|| {
            let best = |pick: fn(&(f64, f64)) -> f64| scored.iter().map(pick).fold(f64::INFINITY, f64::min);
            (best(|m| m.0), best(|m| m.1))
        });

        let wants_bic = estimators.iter().any(|e| e.method == method && e.tuning == Tuning::Bic);
        let bic = if wants_bic {
            match select_from_fits(fits, data, c1) {
                Ok(report) => Some(fit_metrics(&instance, &report.best_fit)?),
                Err(Error::AllFitsFailed) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };

        for (slot, est) in out.iter_mut().zip(estimators) {
            if est.method == method {
                *slot = match est.tuning {
                    Tuning::Oracle => oracle,
                    Tuning::Bic => bic,
                };
            }
        }
    }
    Ok(out)
}

/// Runs `options.reps` replications of `spec` (replication `r` on RNG stream
/// `r`) and aggregates one report per estimator, in the order given.
pub fn run_estimators(spec: &DesignSpec, estimators: &[Estimator], options: &McOptions) -> Result<Vec<McReport>> {
    if options.reps == 0 {
        return Err(Error::InvalidConfig("reps must be at least 1".into()));
    }
    if options.grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    spec.validate()?;
    options.config.validate()?;

    let per_rep: Vec<Vec<Option<(f64, f64)>>> = (0..options.reps as u64)
        .into_par_iter()
        .map(|r| {
            let rep_spec = spec.clone().with_stream(r);
            run_replication(&rep_spec, estimators, options).unwrap_or_else(|e| {
                log::warn!("replication {r} failed: {e}");
                vec![None; estimators.len()]
            })
        })
        .collect();

    Ok(estimators
        .iter()
        .enumerate()
        .map(|(k, est)| McReport::from_values(est, spec, per_rep.iter().map(|rep| rep[k]).collect()))
        .collect())
}

/// One report per method, tuned by the oracle rule or by BIC.
pub fn run_monte_carlo(
    spec: &DesignSpec,
    methods: &[Method],
    grid: &TuningGrid,
    reps: usize,
    oracle_tuning: bool,
    config: &SolverConfig,
) -> Result<Vec<McReport>> {
    let tuning = if oracle_tuning { Tuning::Oracle } else { Tuning::Bic };
    let estimators: Vec<Estimator> = methods.iter().map(|&m| Estimator::new(m, tuning)).collect();
    let mut options = McOptions::new(grid.clone(), reps);
    options.config = config.clone();
    run_estimators(spec, &estimators, &options)
}
