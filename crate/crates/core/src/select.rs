//! Tuning-parameter selection with the modified BIC.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{AdmmState, Solver};
use crate::error::{Error, Result};
use crate::panel::{pinball_loss, PanelData, QuantileFit, SolverConfig};

const ZERO_FLOOR: f64 = 1e-8;

/// Number of coefficients that are nonzero relative to `1e-8·max(1, ‖θ‖∞)`.
pub fn estimate_sparsity(theta: &nalgebra::DVector<f64>) -> usize {
    let floor = ZERO_FLOOR * theta.amax().max(1.0);
    theta.iter().filter(|v| v.abs() > floor).count()
}

/// Number of singular values above `1e-8·max(1, σ_1)`.
pub fn estimate_rank(singular_values: &[f64]) -> usize {
    let top = singular_values.iter().copied().fold(0.0, f64::max);
    let floor = ZERO_FLOOR * top.max(1.0);
    singular_values.iter().filter(|&&s| s > floor).count()
}

/// Default `c1 = log²(nT)`.
pub fn default_c1(n: usize, t_len: usize) -> f64 {
    ((n * t_len) as f64).ln().powi(2)
}

/// The two additive pieces of the modified BIC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BicTerms {
    /// Unnormalized check-loss sum `Σ ρτ(Y − Xθ̂ − Π̂)`.
    pub loss: f64,
    /// `(log(nT)/2)·(c1·ŝ + (1 + n + T)·r̂)`.
    pub penalty: f64,
}

impl BicTerms {
    pub fn total(&self) -> f64 {
        self.loss + self.penalty
    }
}

pub fn bic_terms(fit: &QuantileFit, data: &PanelData, c1: f64) -> Result<BicTerms> {
    let residuals = data.residuals(&fit.theta, &fit.pi)?;
    let loss = residuals.iter().map(|&r| pinball_loss(r, fit.tau)).sum();
    Ok(BicTerms { loss, penalty: bic_penalty(data.n(), data.t_len(), fit.sparsity_estimate, fit.rank_estimate, c1) })
}

pub fn bic_penalty(n: usize, t_len: usize, sparsity: usize, rank: usize, c1: f64) -> f64 {
    let log_nt = ((n * t_len) as f64).ln();
    0.5 * log_nt * (c1 * sparsity as f64 + (1 + n + t_len) as f64 * rank as f64)
}

/// Modified BIC of a fit on the data it was computed from.
pub fn bic_score(fit: &QuantileFit, data: &PanelData, c1: f64) -> Result<f64> {
    Ok(bic_terms(fit, data, c1)?.total())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    pub nu1_values: Vec<f64>,
    pub nu2_values: Vec<f64>,
}

impl Default for TuningGrid {
    /// ν1 ∈ {10⁻⁴, 10⁻⁴·⁵, …, 10⁻⁸}, ν2 ∈ {10⁻³, 10⁻⁴, …, 10⁻⁹}.
    fn default() -> Self {
        Self::log_spaced(-4.0, -8.0, 0.5, -3.0, -9.0, 1.0)
    }
}

impl TuningGrid {
    /// Validates and sorts both axes in descending order.
    pub fn new(mut nu1_values: Vec<f64>, mut nu2_values: Vec<f64>) -> Result<Self> {
        if nu1_values.is_empty() || nu2_values.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if nu1_values.iter().chain(&nu2_values).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidConfig("grid values must be finite and positive".into()));
        }
        nu1_values.sort_by(|a, b| b.total_cmp(a));
        nu2_values.sort_by(|a, b| b.total_cmp(a));
        nu1_values.dedup();
        nu2_values.dedup();
        Ok(Self { nu1_values, nu2_values })
    }

    /// Powers of ten from `10^hi` down to `10^lo` in steps of `step` decades, per axis.
    pub fn log_spaced(nu1_hi: f64, nu1_lo: f64, nu1_step: f64, nu2_hi: f64, nu2_lo: f64, nu2_step: f64) -> Self {
        let axis = |hi: f64, lo: f64, step: f64| {
            let count = ((hi - lo) / step).round() as usize;
            (0..=count).map(|k| 10f64.powf(hi - k as f64 * step)).collect::<Vec<_>>()
        };
        Self { nu1_values: axis(nu1_hi, nu1_lo, nu1_step), nu2_values: axis(nu2_hi, nu2_lo, nu2_step) }
    }

    pub fn len(&self) -> usize {
        self.nu1_values.len() * self.nu2_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One fitted grid point, in ν1-major, ν2-descending order.
#[derive(Debug, Clone)]
pub struct GridFit {
    pub nu1: f64,
    pub nu2: f64,
    pub fit: Result<QuantileFit>,
}

/// Fits every `(ν1, ν2)` pair. Within each ν1 column the fits run along
/// decreasing ν2, each started from the previous solution when `warm_start`
/// is set. Columns are independent and run in parallel.
pub fn fit_grid(solver: &Solver<'_>, grid: &TuningGrid, config: &SolverConfig, warm_start: bool) -> Vec<GridFit> {
    grid.nu1_values
        .par_iter()
        .map(|&nu1| {
            let mut state: Option<AdmmState> = None;
            grid.nu2_values
                .iter()
                .map(|&nu2| {
                    let cfg = config.clone().with_penalties(nu1, nu2);
                    let start = match (&state, warm_start) {
                        (Some(s), true) => s.clone(),
                        _ => AdmmState::for_data(solver.data()),
                    };
                    let fit = match solver.fit_from(&cfg, start) {
                        Ok((fit, end)) => {
                            state = Some(end);
                            Ok(fit)
                        }
                        Err(e) => {
                            state = None;
                            Err(e)
                        }
                    };
                    GridFit { nu1, nu2, fit }
                })
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub nu1: f64,
    pub nu2: f64,
    /// `None` when the solver failed at this point.
    pub bic: Option<f64>,
    pub sparsity: usize,
    pub rank: usize,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct SelectionReport {
    pub table: Vec<SelectionRow>,
    pub best_nu1: f64,
    pub best_nu2: f64,
    pub best_fit: QuantileFit,
}

/// Index of the minimum-BIC converged row; ties go to the larger `(ν1, ν2)`.
pub(crate) fn best_row(rows: &[SelectionRow]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, row) in rows.iter().enumerate() {
        let Some(bic) = row.bic.filter(|_| row.converged) else { continue };
        let better = match best {
            None => true,
            Some(b) => {
                let cur = &rows[b];
                let cur_bic = cur.bic.unwrap_or(f64::INFINITY);
                bic < cur_bic
                    || (bic == cur_bic && (row.nu1, row.nu2).partial_cmp(&(cur.nu1, cur.nu2)) == Some(std::cmp::Ordering::Greater))
            }
        };
        if better {
            best = Some(k);
        }
    }
    best
}

/// Scores every grid fit and picks the BIC minimizer among converged fits.
pub fn select_from_fits(fits: Vec<GridFit>, data: &PanelData, c1: f64) -> Result<SelectionReport> {
    let mut table = Vec::with_capacity(fits.len());
    let mut kept = Vec::with_capacity(fits.len());
    for GridFit { nu1, nu2, fit } in fits {
        let row = match &fit {
            Ok(f) => SelectionRow {
                nu1,
                nu2,
                bic: Some(bic_score(f, data, c1)?),
                sparsity: f.sparsity_estimate,
                rank: f.rank_estimate,
                objective: f.objective,
                iterations: f.iterations,
                converged: f.converged,
            },
            Err(e) => {
                log::warn!("fit failed at nu1={nu1:e} nu2={nu2:e}: {e}");
                SelectionRow {
                    nu1,
                    nu2,
                    bic: None,
                    sparsity: 0,
                    rank: 0,
                    objective: f64::NAN,
                    iterations: 0,
                    converged: false,
                }
            }
        };
        table.push(row);
        kept.push(fit.ok());
    }
    let best = best_row(&table).ok_or(Error::AllFitsFailed)?;
    let best_fit = kept.swap_remove(best).ok_or(Error::AllFitsFailed)?;
    Ok(SelectionReport { best_nu1: table[best].nu1, best_nu2: table[best].nu2, table, best_fit })
}

/// Fits the whole grid with warm starts and returns the BIC selection.
pub fn grid_search(solver: &Solver<'_>, grid: &TuningGrid, config: &SolverConfig, c1: f64) -> Result<SelectionReport> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let fits = fit_grid(solver, grid, config, true);
    select_from_fits(fits, solver.data(), c1)
}
