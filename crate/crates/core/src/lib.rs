//! Latent panel quantile regression.
//!
//! Estimates a sparse coefficient vector θ(τ) and a low-rank latent matrix
//! Π(τ) from a balanced panel by minimizing
//!
//! ```text
//! (1/nT)·Σ ρτ(Y − Xθ − Π) + ν1·Σ_j σ̂_j|θ_j| + ν2·‖Π‖_*
//! ```
//!
//! with a scaled ADMM whose block updates are all closed-form proximal
//! steps. Around the solver sit BIC tuning over a (ν1, ν2) grid, factor
//! extraction from Π̂, simulation designs and Monte Carlo evaluation.

pub mod admm;
pub mod error;
pub mod factors;
pub mod linalg;
pub mod metrics;
pub mod panel;
pub mod prox;
pub mod select;
pub mod sim;

pub use nalgebra;

pub use admm::{admm_residuals, fit, fit_no_covariates, solve_zw_joint, AdmmState, GramCache, Residuals, Solver};
pub use error::{Error, Result};
pub use factors::{extract_factors, procrustes_distance, variance_explained, FactorDecomposition};
pub use metrics::{
    quantile_error, run_estimators, run_monte_carlo, support_recovery, theta_error_scaled, Estimator, McOptions,
    McReport, Method, Tuning,
};
pub use panel::{
    compute_column_scales, penalized_objective, pinball_loss, ColumnScales, Loss, PanelData, QuantileFit,
    SolverConfig,
};
pub use prox::{prox_pinball, prox_squared, singular_value_threshold, soft_threshold, SvtResult};
pub use select::{
    bic_score, default_c1, estimate_rank, estimate_sparsity, grid_search, SelectionReport, SelectionRow, TuningGrid,
};
pub use sim::{generate, sample_scaled_t3, Design, DesignSpec, SimInstance};
