//! Seeded generators for the four simulation designs.
//!
//! All draws come from ChaCha20 (`rand_chacha`), seeded with
//! `seed_from_u64(seed)` and positioned on stream `stream`. Monte Carlo
//! replication `r` uses stream `r`. Within an instance the draw order is:
//! covariates (t-major, then i, then j), then the latent factors for
//! Designs 3 and 4 (for each k: c_k, u_k, v_k), then the errors (t-major, then i).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::PanelData;

/// Identifier recorded alongside generated data.
pub const RNG_ALGORITHM: &str = "chacha20/rand_chacha-0.9/seed_from_u64+set_stream";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Design {
    /// Location shift, deterministic rank-one Π, t(3)/√3 errors.
    D1,
    /// Location-scale shift, deterministic rank-one Π, Gaussian errors scaled by X'θ̄.
    D2,
    /// Location shift with a random rank-≤5 Π.
    D3,
    /// Location-scale shift with a random rank-≤5 Π.
    D4,
}

impl Design {
    fn random_factors(self) -> bool {
        matches!(self, Design::D3 | Design::D4)
    }

    fn location_scale(self) -> bool {
        matches!(self, Design::D2 | Design::D4)
    }
}

impl std::fmt::Display for Design {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

impl std::str::FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "D1" | "1" => Ok(Design::D1),
            "D2" | "2" => Ok(Design::D2),
            "D3" | "3" => Ok(Design::D3),
            "D4" | "4" => Ok(Design::D4),
            other => Err(Error::InvalidConfig(format!("unknown design {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub design: Design,
    pub n: usize,
    pub t_len: usize,
    pub p: usize,
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
    /// Replaces the default scale coefficients `θ̄_j = j/(2p)` of Designs 2 and 4.
    #[serde(default)]
    pub scale_coef_override: Option<Vec<f64>>,
}

impl DesignSpec {
    pub fn new(design: Design, n: usize, t_len: usize, p: usize, seed: u64) -> Self {
        Self { design, n, t_len, p, seed, stream: 0, scale_coef_override: None }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.t_len == 0 || self.p == 0 {
            return Err(Error::InvalidConfig(format!(
                "design dimensions must be positive, got n={} T={} p={}",
                self.n, self.t_len, self.p
            )));
        }
        if let Some(sc) = &self.scale_coef_override {
            if sc.len() != self.p {
                return Err(Error::LengthMismatch { left: sc.len(), right: self.p });
            }
        }
        Ok(())
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// A generated panel together with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimInstance {
    pub spec: DesignSpec,
    pub data: PanelData,
    pub theta_true: DVector<f64>,
    pub pi_true: DMatrix<f64>,
    /// `θ̄` for the location-scale designs.
    pub scale_coef: Option<DVector<f64>>,
    /// Conditional median `X'θ + Π`.
    pub true_median_surface: DMatrix<f64>,
}

/// `θ_j = 1` for `j ≤ min(10, p)`, else 0.
pub fn true_coefficients(p: usize) -> DVector<f64> {
    DVector::from_fn(p, |j, _| if j < 10 { 1.0 } else { 0.0 })
}

/// `θ̄_j = j/(2p)`, `j = 1..p`.
pub fn default_scale_coefficients(p: usize) -> DVector<f64> {
    DVector::from_fn(p, |j, _| (j + 1) as f64 / (2 * p) as f64)
}

/// `Π_{i,t} = 5i·cos(4πt/T)/n` with 1-based `i`, `t`.
pub fn deterministic_pi(n: usize, t_len: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, t_len, |i, t| {
        5.0 * (i + 1) as f64 * (4.0 * PI * (t + 1) as f64 / t_len as f64).cos() / n as f64
    })
}

fn unit_gaussian<R: Rng + ?Sized>(rng: &mut R, len: usize) -> DVector<f64> {
    let v = DVector::from_fn(len, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = v.norm();
    v / norm
}

/// `Σ_{k≤5} c_k·u_k·v_kᵀ` with `c_k ~ U[0, 1/4]` and unit Gaussian directions.
pub fn random_factor_pi<R: Rng + ?Sized>(rng: &mut R, n: usize, t_len: usize) -> DMatrix<f64> {
    let mut pi = DMatrix::zeros(n, t_len);
    for _ in 0..5 {
        let c: f64 = rng.random_range(0.0..0.25);
        let u = unit_gaussian(rng, n);
        let v = unit_gaussian(rng, t_len);
        pi.ger(c, &u, &v, 1.0);
    }
    pi
}

/// One draw of Student-t(3)/√3 via `z / sqrt(χ²₃/3)`, with χ²₃ a sum of three squared normals.
pub fn scaled_t3<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    let chi2: f64 = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal).powi(2)).sum();
    z / (chi2 / 3.0).sqrt() / 3f64.sqrt()
}

/// `count` independent draws of t(3)/√3 (variance 1, median 0).
pub fn sample_scaled_t3<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<f64> {
    (0..count).map(|_| scaled_t3(rng)).collect()
}

pub fn generate(spec: &DesignSpec) -> Result<SimInstance> {
    spec.validate()?;
    let (n, t_len, p) = (spec.n, spec.t_len, spec.p);
    let mut rng = spec.rng();

    let mut x = vec![DMatrix::zeros(n, t_len); p];
    for t in 0..t_len {
        for i in 0..n {
            for xj in x.iter_mut() {
                xj[(i, t)] = rng.sample(StandardNormal);
            }
        }
    }

    let theta_true = true_coefficients(p);
    let pi_true = if spec.design.random_factors() {
        random_factor_pi(&mut rng, n, t_len)
    } else {
        deterministic_pi(n, t_len)
    };
    let scale_coef = spec.design.location_scale().then(|| match &spec.scale_coef_override {
        Some(v) => DVector::from_column_slice(v),
        None => default_scale_coefficients(p),
    });

    let mut location = DMatrix::zeros(n, t_len);
    for (xj, &tj) in x.iter().zip(theta_true.iter()) {
        crate::linalg::add_scaled(&mut location, tj, xj);
    }
    let median = &location + &pi_true;

    let mut y = median.clone();
    match &scale_coef {
        None => {
            for t in 0..t_len {
                for i in 0..n {
                    y[(i, t)] += scaled_t3(&mut rng);
                }
            }
        }
        Some(scale) => {
            for t in 0..t_len {
                for i in 0..n {
                    let index: f64 = x.iter().zip(scale.iter()).map(|(xj, s)| xj[(i, t)] * s).sum();
                    let e: f64 = rng.sample(StandardNormal);
                    y[(i, t)] += index * e;
                }
            }
        }
    }

    Ok(SimInstance {
        spec: spec.clone(),
        data: PanelData::new(y, x)?,
        theta_true,
        pi_true,
        scale_coef,
        true_median_surface: median,
    })
}
