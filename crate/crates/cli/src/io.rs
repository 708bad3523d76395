//! CSV and JSON persistence.
//!
//! Panels are read in long format, one `(unit, period)` cell per row with the
//! header `unit,period,y,x1,…,xp`. Units and periods are indexed in order of
//! first appearance. Matrices are written headerless, one row per line.
//! Reals are written with 17 significant digits so that a write/read cycle
//! reproduces every value bit for bit.

use std::collections::{HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use lpqr_core::{ColumnScales, FactorDecomposition, PanelData, QuantileFit, SimInstance};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{CliError, Result};

/// Seventeen significant digits, enough to reproduce any `f64` exactly.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_real(path: &Path, line: u64, field: &str, what: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("{what} is not a number: {field:?}"),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::io(path, source),
        other => CliError::Parse { path: path.to_path_buf(), line, message: format!("{other:?}") },
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn index_of(key: &str, names: &mut Vec<String>, index: &mut HashMap<String, usize>) -> usize {
    *index.entry(key.to_string()).or_insert_with(|| {
        names.push(key.to_string());
        names.len() - 1
    })
}

/// Reads a balanced long-format panel.
pub fn read_panel_csv(path: &Path) -> Result<PanelData> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    if text.trim().is_empty() {
        return Err(CliError::EmptyFile { path: path.to_path_buf() });
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names.len() < 3 || names[..3] != ["unit", "period", "y"] {
        return Err(CliError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("header must start with unit,period,y; found {:?}", header.as_slice()),
        });
    }
    let p = names.len() - 3;

    let mut units: Vec<String> = Vec::new();
    let mut periods: Vec<String> = Vec::new();
    let mut unit_index: HashMap<String, usize> = HashMap::new();
    let mut period_index: HashMap<String, usize> = HashMap::new();
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let mut cells: Vec<(usize, usize, f64, Vec<f64>)> = Vec::new();

    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let unit = index_of(&record[0], &mut units, &mut unit_index);
        let period = index_of(&record[1], &mut periods, &mut period_index);
        if !seen.insert((unit, period)) {
            return Err(CliError::DuplicateCell {
                path: path.to_path_buf(),
                unit: record[0].to_string(),
                period: record[1].to_string(),
            });
        }
        let y = parse_real(path, line, &record[2], "y")?;
        let x = (0..p).map(|j| parse_real(path, line, &record[3 + j], names[3 + j])).collect::<Result<Vec<_>>>()?;
        cells.push((unit, period, y, x));
    }
    if cells.is_empty() {
        return Err(CliError::EmptyFile { path: path.to_path_buf() });
    }

    let (n, t_len) = (units.len(), periods.len());
    if cells.len() != n * t_len {
        let missing = (0..n)
            .flat_map(|i| (0..t_len).map(move |t| (i, t)))
            .find(|cell| !seen.contains(cell))
            .expect("fewer cells than n*T");
        return Err(CliError::UnbalancedPanel {
            path: path.to_path_buf(),
            unit: units[missing.0].clone(),
            period: periods[missing.1].clone(),
        });
    }
    let mut y = DMatrix::zeros(n, t_len);
    let mut x = vec![DMatrix::zeros(n, t_len); p];
    for (i, t, value, covariates) in cells {
        y[(i, t)] = value;
        for (xj, v) in x.iter_mut().zip(covariates) {
            xj[(i, t)] = v;
        }
    }
    Ok(PanelData::new(y, x)?)
}

/// Writes `data` in long format with units `1..=n` and periods `1..=T`,
/// unit-major, so that reading it back gives the same indexing.
pub fn write_panel_csv(data: &PanelData, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let mut header = String::from("unit,period,y");
    for j in 1..=data.p() {
        header.push_str(&format!(",x{j}"));
    }
    let io = |e| CliError::io(path, e);
    writeln!(w, "{header}").map_err(io)?;
    for i in 0..data.n() {
        for t in 0..data.t_len() {
            write!(w, "{},{},{}", i + 1, t + 1, format_real(data.y()[(i, t)])).map_err(io)?;
            for j in 0..data.p() {
                write!(w, ",{}", format_real(data.x(i, t, j))).map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
    }
    finish(path, w)
}

pub fn write_matrix_csv(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format_real(*v)).collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| CliError::io(path, e))?;
    }
    finish(path, w)
}

/// Reads a headerless rectangular matrix.
pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = line
            .split(',')
            .map(|f| parse_real(path, k as u64 + 1, f, "entry"))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(CliError::Parse {
                    path: path.to_path_buf(),
                    line: k as u64 + 1,
                    message: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::EmptyFile { path: path.to_path_buf() });
    }
    let cols = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(|e| CliError::io(path, e))?;
    finish(path, w)
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, Serialize, serde::Deserialize, PartialEq)]
pub struct FitSummary {
    pub tau: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub n: usize,
    pub t_len: usize,
    pub p: usize,
    pub rank: usize,
    pub sparsity: usize,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub singular_values: Vec<f64>,
    pub config: serde_json::Value,
}

impl FitSummary {
    pub fn new(fit: &QuantileFit, data: &PanelData, config: serde_json::Value) -> Self {
        Self {
            tau: fit.tau,
            nu1: fit.nu1,
            nu2: fit.nu2,
            n: data.n(),
            t_len: data.t_len(),
            p: data.p(),
            rank: fit.rank_estimate,
            sparsity: fit.sparsity_estimate,
            objective: fit.objective,
            iterations: fit.iterations,
            converged: fit.converged,
            primal_residual: fit.primal_residual,
            dual_residual: fit.dual_residual,
            singular_values: fit.singular_values.clone(),
            config,
        }
    }
}

/// Writes theta.csv, pi.csv, factors.csv, loadings.csv and summary.json.
/// Without a decomposition (rank 0) the factor files are empty.
pub fn write_fit(
    fit: &QuantileFit,
    decomposition: Option<&FactorDecomposition>,
    scales: &ColumnScales,
    summary: &FitSummary,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let theta_path = dir.join("theta.csv");
    let mut w = create(&theta_path)?;
    let io = |e| CliError::io(&theta_path, e);
    writeln!(w, "j,value,scale").map_err(io)?;
    for (j, (v, s)) in fit.theta.iter().zip(&scales.sigma_hat).enumerate() {
        writeln!(w, "{},{},{}", j + 1, format_real(*v), format_real(*s)).map_err(io)?;
    }
    finish(&theta_path, w)?;

    let pi_path = dir.join("pi.csv");
    write_matrix_csv(&fit.pi, &pi_path)?;
    let factors_path = dir.join("factors.csv");
    let loadings_path = dir.join("loadings.csv");
    match decomposition {
        Some(d) => {
            write_matrix_csv(&d.factors, &factors_path)?;
            write_matrix_csv(&d.loadings, &loadings_path)?;
        }
        None => {
            fs::write(&factors_path, "").map_err(|e| CliError::io(&factors_path, e))?;
            fs::write(&loadings_path, "").map_err(|e| CliError::io(&loadings_path, e))?;
        }
    }
    let summary_path = dir.join("summary.json");
    write_json(summary, &summary_path)?;
    Ok(vec![theta_path, pi_path, factors_path, loadings_path, summary_path])
}

/// Reads the `value` column of theta.csv.
pub fn read_theta_csv(path: &Path) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        out.push(parse_real(path, line, &record[1], "value")?);
    }
    Ok(out)
}

/// Ground truth written next to a simulated panel.
#[derive(Debug, Clone, Serialize, serde::Deserialize, PartialEq)]
pub struct TruthSidecar {
    pub design: lpqr_core::Design,
    pub n: usize,
    pub t_len: usize,
    pub p: usize,
    pub seed: u64,
    pub stream: u64,
    pub rng: String,
    pub theta: Vec<f64>,
    pub scale_coef: Option<Vec<f64>>,
    /// Row-major, `n` rows of length `T`.
    pub pi: Vec<Vec<f64>>,
    pub median_surface: Vec<Vec<f64>>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl TruthSidecar {
    pub fn new(instance: &SimInstance) -> Self {
        let spec = &instance.spec;
        Self {
            design: spec.design,
            n: spec.n,
            t_len: spec.t_len,
            p: spec.p,
            seed: spec.seed,
            stream: spec.stream,
            rng: lpqr_core::sim::RNG_ALGORITHM.to_string(),
            theta: instance.theta_true.iter().copied().collect(),
            scale_coef: instance.scale_coef.as_ref().map(|c| c.iter().copied().collect()),
            pi: rows(&instance.pi_true),
            median_surface: rows(&instance.true_median_surface),
        }
    }
}
