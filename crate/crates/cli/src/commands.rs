use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use lpqr_core::linalg::singular_values;
use lpqr_core::select::SelectionRow;
use lpqr_core::{
    compute_column_scales, default_c1, extract_factors, generate, grid_search, run_estimators, variance_explained,
    ColumnScales, Estimator, McOptions, McReport, PanelData, QuantileFit, Solver, Tuning,
};

use crate::config::{BenchConfig, FactorsConfig, FitConfig, RunConfig, SimulateConfig, TuneConfig};
use crate::error::{CliError, Result};
use crate::io::{self, format_real, FitSummary, TruthSidecar};

/// One line per result, printed by the binary.
pub type Messages = Vec<String>;

pub fn run(config: &RunConfig) -> Result<Messages> {
    io::ensure_dir(config.out_dir())?;
    let json = config.to_canonical_json()?;
    let config_path = config.out_dir().join("config.json");
    fs::write(&config_path, json + "\n").map_err(|e| CliError::io(&config_path, e))?;
    match config {
        RunConfig::Fit(c) => run_fit(c, config),
        RunConfig::Tune(c) => run_tune(c, config),
        RunConfig::Simulate(c) => run_simulate(c),
        RunConfig::Factors(c) => run_factors(c),
        RunConfig::Bench(c) => run_bench(c),
    }
}

/// Output directory for one quantile level: `out` itself for a single level.
fn tau_dir(out: &Path, taus: &[f64], tau: f64) -> PathBuf {
    if taus.len() == 1 {
        out.to_path_buf()
    } else {
        out.join(format!("tau_{tau}"))
    }
}

fn save_fit(
    fit: &QuantileFit,
    data: &PanelData,
    scales: &ColumnScales,
    echo: &RunConfig,
    dir: &Path,
) -> Result<String> {
    let decomposition = match fit.rank_estimate {
        0 => None,
        r => Some(extract_factors(&fit.pi, r)?),
    };
    let summary = FitSummary::new(fit, data, serde_json::to_value(echo)?);
    io::write_fit(fit, decomposition.as_ref(), scales, &summary, dir)?;
    Ok(format!(
        "tau={} nu1={:e} nu2={:e} converged={} iterations={} rank={} sparsity={} objective={:.6e} -> {}",
        fit.tau,
        fit.nu1,
        fit.nu2,
        fit.converged,
        fit.iterations,
        fit.rank_estimate,
        fit.sparsity_estimate,
        fit.objective,
        dir.display()
    ))
}

fn column_scales(data: &PanelData) -> Result<ColumnScales> {
    Ok(if data.p() == 0 { ColumnScales::unit(0) } else { compute_column_scales(data)? })
}

fn run_fit(c: &FitConfig, echo: &RunConfig) -> Result<Messages> {
    let data = io::read_panel_csv(&c.input)?;
    let scales = column_scales(&data)?;
    let solver = Solver::new(&data, scales.clone())?;
    c.taus
        .iter()
        .map(|&tau| {
            let fit = solver.fit(&c.solver.clone().with_tau(tau))?;
            save_fit(&fit, &data, &scales, echo, &tau_dir(&c.out, &c.taus, tau))
        })
        .collect()
}

fn write_selection_csv(rows: &[SelectionRow], path: &Path) -> Result<()> {
    let mut text = String::from("nu1,nu2,bic,sparsity,rank,objective,iterations,converged\n");
    for r in rows {
        let bic = r.bic.map(format_real).unwrap_or_default();
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            format_real(r.nu1),
            format_real(r.nu2),
            bic,
            r.sparsity,
            r.rank,
            format_real(r.objective),
            r.iterations,
            r.converged
        ));
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn run_tune(c: &TuneConfig, echo: &RunConfig) -> Result<Messages> {
    let data = io::read_panel_csv(&c.input)?;
    let scales = column_scales(&data)?;
    let solver = Solver::new(&data, scales.clone())?;
    let c1 = c.c1.unwrap_or_else(|| default_c1(data.n(), data.t_len()));
    let mut messages = Vec::new();
    for &tau in &c.taus {
        let dir = tau_dir(&c.out, &c.taus, tau);
        let report = grid_search(&solver, &c.grid, &c.solver.clone().with_tau(tau), c1)?;
        io::ensure_dir(&dir)?;
        write_selection_csv(&report.table, &dir.join("selection.csv"))?;
        messages.push(format!("tau={tau} best nu1={:e} nu2={:e}", report.best_nu1, report.best_nu2));
        messages.push(save_fit(&report.best_fit, &data, &scales, echo, &dir)?);
    }
    Ok(messages)
}

fn run_simulate(c: &SimulateConfig) -> Result<Messages> {
    let instance = generate(&c.spec)?;
    let panel = c.out.join("panel.csv");
    io::write_panel_csv(&instance.data, &panel)?;
    let truth = c.out.join("truth.json");
    io::write_json(&TruthSidecar::new(&instance), &truth)?;
    Ok(vec![format!("{} {}", panel.display(), truth.display())])
}

fn run_factors(c: &FactorsConfig) -> Result<Messages> {
    let pi = io::read_matrix_csv(&c.pi)?;
    let decomposition = extract_factors(&pi, c.rank)?;
    io::write_matrix_csv(&decomposition.factors, &c.out.join("factors.csv"))?;
    io::write_matrix_csv(&decomposition.loadings, &c.out.join("loadings.csv"))?;

    let spectrum = singular_values(&pi)?;
    let shares = variance_explained(&spectrum)?;
    let mut text = String::from("component,singular_value,variance_explained\n");
    for (k, (s, v)) in spectrum.iter().zip(&shares).enumerate() {
        text.push_str(&format!("{},{},{}\n", k + 1, format_real(*s), format_real(*v)));
    }
    let path = c.out.join("variance.csv");
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    let kept: f64 = shares[..c.rank].iter().sum();
    Ok(vec![format!("rank {} explains {kept:.2}% of the variance -> {}", c.rank, c.out.display())])
}

pub const BENCH_HEADER: &str = "method,design,n,p,T,reps,failed_reps,theta_err_scaled,quantile_err,seed,rng";

pub fn write_bench_csv(reports: &[McReport], seed: u64, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut text = format!("{BENCH_HEADER}\n");
    for r in reports {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.method,
            r.design,
            r.n,
            r.p,
            r.t_len,
            r.reps,
            r.failed_reps,
            format_real(r.mean_theta_err_scaled),
            format_real(r.mean_quantile_err),
            seed,
            lpqr_core::sim::RNG_ALGORITHM
        ));
    }
    file.write_all(text.as_bytes()).map_err(|e| CliError::io(path, e))
}

fn run_bench(c: &BenchConfig) -> Result<Messages> {
    let tuning = if c.oracle_tuning { Tuning::Oracle } else { Tuning::Bic };
    let estimators = c.methods.iter().map(|m| Estimator::parse(m, tuning)).collect::<lpqr_core::Result<Vec<_>>>()?;
    if estimators.is_empty() {
        return Err(CliError::Usage("no methods given".into()));
    }
    let options = McOptions { config: c.solver.clone(), c1: c.c1, ..McOptions::new(c.grid.clone(), c.reps) };
    let reports = run_estimators(&c.spec, &estimators, &options)?;
    let path = c.out.join("bench.csv");
    write_bench_csv(&reports, c.spec.seed, &path)?;
    Ok(reports
        .iter()
        .map(|r| {
            format!(
                "{:<14} theta_err={:.4} quantile_err={:.4} reps={} failed={}",
                r.method, r.mean_theta_err_scaled, r.mean_quantile_err, r.reps, r.failed_reps
            )
        })
        .chain(std::iter::once(format!("-> {}", path.display())))
        .collect())
}
