use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lpqr_core::{Design, DesignSpec, Loss, SolverConfig, TuningGrid};

use crate::commands;
use crate::config::{BenchConfig, FactorsConfig, FitConfig, RunConfig, SimulateConfig, TuneConfig};
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "lpqr", version, about = "Panel quantile regression with sparse covariates and a low-rank latent term")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one model per quantile level.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Select (nu1, nu2) over a grid by the modified BIC.
    Tune {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Generate a synthetic panel with its ground truth.
    Simulate {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Factors and loadings of a stored latent matrix.
    Factors {
        #[arg(long)]
        pi: PathBuf,
        #[arg(long)]
        rank: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Monte Carlo comparison of estimators.
    Bench {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        /// Comma list; a `bic-` prefix selects BIC tuning for that method.
        #[arg(long, value_delimiter = ',', default_value = "l1nnqr,bic-l1nnqr,l1nnls,l1qr")]
        methods: Vec<String>,
        /// Tuning rule for methods without a prefix.
        #[arg(long, value_enum, default_value_t = TuningArg::Oracle)]
        tuning: TuningArg,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TuningArg {
    Oracle,
    Bic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LossArg {
    Quantile,
    Squared,
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Quantile levels, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    tau: Vec<f64>,
    #[arg(long)]
    nu1: Option<f64>,
    #[arg(long)]
    nu2: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol_abs: Option<f64>,
    #[arg(long)]
    tol_rel: Option<f64>,
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    #[arg(long)]
    fix_pi_zero: bool,
    #[arg(long)]
    pi_inf_bound: Option<f64>,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        let d = SolverConfig::default();
        SolverConfig {
            tau: self.tau.first().copied().unwrap_or(d.tau),
            nu1: self.nu1.unwrap_or(d.nu1),
            nu2: self.nu2.unwrap_or(d.nu2),
            eta: self.eta.unwrap_or(d.eta),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            tol_abs: self.tol_abs.unwrap_or(d.tol_abs),
            tol_rel: self.tol_rel.unwrap_or(d.tol_rel),
            loss: match self.loss {
                Some(LossArg::Squared) => Loss::Squared,
                Some(LossArg::Quantile) => Loss::Quantile,
                None => d.loss,
            },
            fix_pi_zero: self.fix_pi_zero,
            pi_inf_bound: self.pi_inf_bound,
        }
    }

    fn validated(&self) -> Result<(Vec<f64>, SolverConfig)> {
        if self.tau.is_empty() {
            return Err(CliError::Usage("--tau needs at least one value".into()));
        }
        let config = self.config();
        for &tau in &self.tau {
            config.clone().with_tau(tau).validate()?;
        }
        Ok((self.tau.clone(), config))
    }
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Comma list; `1e-4.5` style exponents are accepted.
    #[arg(long, value_delimiter = ',', value_parser = parse_power)]
    grid_nu1: Vec<f64>,
    #[arg(long, value_delimiter = ',', value_parser = parse_power)]
    grid_nu2: Vec<f64>,
    /// BIC sparsity weight; defaults to log²(nT).
    #[arg(long)]
    c1: Option<f64>,
}

impl GridArgs {
    fn grid(&self) -> Result<TuningGrid> {
        let d = TuningGrid::default();
        let pick = |v: &Vec<f64>, default: Vec<f64>| if v.is_empty() { default } else { v.clone() };
        Ok(TuningGrid::new(pick(&self.grid_nu1, d.nu1_values), pick(&self.grid_nu2, d.nu2_values))?)
    }
}

/// Parses a real, also accepting a fractional decimal exponent (`1e-4.5`).
fn parse_power(s: &str) -> std::result::Result<f64, String> {
    if let Ok(v) = s.trim().parse::<f64>() {
        return Ok(v);
    }
    let (mantissa, exponent) = s.trim().split_once(['e', 'E']).ok_or_else(|| format!("not a number: {s:?}"))?;
    let m: f64 = mantissa.parse().map_err(|_| format!("not a number: {s:?}"))?;
    let e: f64 = exponent.parse().map_err(|_| format!("not a number: {s:?}"))?;
    Ok(m * 10f64.powf(e))
}

#[derive(Debug, Args)]
struct DesignArgs {
    #[arg(long)]
    design: Design,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long = "T")]
    t_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// RNG stream; Monte Carlo replication r uses stream r.
    #[arg(long, default_value_t = 0)]
    stream: u64,
}

impl DesignArgs {
    fn spec(&self) -> Result<DesignSpec> {
        let spec = DesignSpec::new(self.design, self.n, self.t_len, self.p, self.seed).with_stream(self.stream);
        spec.validate()?;
        Ok(spec)
    }
}

fn resolve(command: Command) -> Result<RunConfig> {
    Ok(match command {
        Command::Fit { input, solver, out } => {
            let (taus, solver) = solver.validated()?;
            RunConfig::Fit(FitConfig { input, out, taus, solver })
        }
        Command::Tune { input, solver, grid, out } => {
            let (taus, solver) = solver.validated()?;
            RunConfig::Tune(TuneConfig { input, out, taus, solver, grid: grid.grid()?, c1: grid.c1 })
        }
        Command::Simulate { design, out } => RunConfig::Simulate(SimulateConfig { out, spec: design.spec()? }),
        Command::Factors { pi, rank, out } => RunConfig::Factors(FactorsConfig { pi, rank, out }),
        Command::Bench { design, reps, methods, tuning, solver, grid, out } => {
            let (_, solver) = solver.validated()?;
            if reps == 0 {
                return Err(CliError::Usage("--reps must be at least 1".into()));
            }
            RunConfig::Bench(BenchConfig {
                out,
                spec: design.spec()?,
                reps,
                methods,
                oracle_tuning: matches!(tuning, TuningArg::Oracle),
                grid: grid.grid()?,
                solver,
                c1: grid.c1,
            })
        }
    })
}

/// Parses `argv`, runs the command and returns the process exit code.
/// Failures print one line: `error[<category>]: <message>`.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            if code == 0 {
                let _ = e.print();
            } else {
                eprintln!("error[usage]: {}", first_line(&e.to_string()));
            }
            return code;
        }
    };
    match resolve(cli.command).and_then(|config| commands::run(&config)) {
        Ok(messages) => {
            for m in messages {
                println!("{m}");
            }
            0
        }
        Err(e) => {
            eprintln!("error[{}]: {}", e.category(), first_line(&e.to_string()));
            e.exit_code()
        }
    }
}

fn first_line(s: &str) -> String {
    s.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" ")
}
