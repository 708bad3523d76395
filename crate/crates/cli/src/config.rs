//! Resolved run configuration. Every command writes its configuration as
//! `config.json` next to its outputs.

use std::path::PathBuf;

use lpqr_core::{DesignSpec, SolverConfig, TuningGrid};
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub input: PathBuf,
    pub out: PathBuf,
    pub taus: Vec<f64>,
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub input: PathBuf,
    pub out: PathBuf,
    pub taus: Vec<f64>,
    pub solver: SolverConfig,
    pub grid: TuningGrid,
    /// `None` means `log²(nT)`.
    pub c1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub out: PathBuf,
    pub spec: DesignSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorsConfig {
    pub pi: PathBuf,
    pub rank: usize,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub out: PathBuf,
    pub spec: DesignSpec,
    pub reps: usize,
    /// Estimator labels such as `l1nnqr` or `bic-l1nnqr`.
    pub methods: Vec<String>,
    pub oracle_tuning: bool,
    pub grid: TuningGrid,
    pub solver: SolverConfig,
    pub c1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum RunConfig {
    Fit(FitConfig),
    Tune(TuneConfig),
    Simulate(SimulateConfig),
    Factors(FactorsConfig),
    Bench(BenchConfig),
}

impl RunConfig {
    pub fn to_canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn out_dir(&self) -> &PathBuf {
        match self {
            RunConfig::Fit(c) => &c.out,
            RunConfig::Tune(c) => &c.out,
            RunConfig::Simulate(c) => &c.out,
            RunConfig::Factors(c) => &c.out,
            RunConfig::Bench(c) => &c.out,
        }
    }
}
