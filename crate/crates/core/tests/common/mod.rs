#![allow(dead_code)]

use lpqr_core::{ColumnScales, PanelData};
use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Panel with standard-normal-ish covariates and a noisy linear response.
pub fn random_panel(rng: &mut ChaCha8Rng, n: usize, t_len: usize, p: usize) -> PanelData {
    let x: Vec<DMatrix<f64>> =
        (0..p).map(|_| DMatrix::from_fn(n, t_len, |_, _| rng.random_range(-2.0..2.0))).collect();
    let theta: Vec<f64> = (0..p).map(|_| rng.random_range(-1.5..1.5)).collect();
    let mut y = DMatrix::from_fn(n, t_len, |_, _| rng.random_range(-1.0..1.0));
    for (xj, tj) in x.iter().zip(&theta) {
        y += xj * *tj;
    }
    PanelData::new(y, x).unwrap()
}

/// Minimum of `(1/nT)·Σρτ(Y − Xθ) + ν1·Σ w_j|θ_j|` written as a linear program
/// in `(θ⁺, θ⁻, u⁺, u⁻)`.
pub fn l1_quantile_lp(data: &PanelData, tau: f64, nu1: f64, scales: &ColumnScales) -> f64 {
    let (n, t_len, p) = (data.n(), data.t_len(), data.p());
    let inv = 1.0 / (n * t_len) as f64;
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let free = (0.0, f64::INFINITY);
    let pos: Vec<_> = (0..p).map(|j| lp.add_var(nu1 * scales.sigma_hat[j], free)).collect();
    let neg: Vec<_> = (0..p).map(|j| lp.add_var(nu1 * scales.sigma_hat[j], free)).collect();
    for t in 0..t_len {
        for i in 0..n {
            let up = lp.add_var(tau * inv, free);
            let down = lp.add_var((1.0 - tau) * inv, free);
            let mut row = vec![(up, 1.0), (down, -1.0)];
            for j in 0..p {
                let x = data.x(i, t, j);
                row.push((pos[j], x));
                row.push((neg[j], -x));
            }
            lp.add_constraint(row.as_slice(), ComparisonOp::Eq, data.y()[(i, t)]);
        }
    }
    lp.solve().unwrap().into_solution().unwrap().objective()
}

/// Least squares through the normal equations `(Σ x x')θ = Σ x y`.
pub fn ols(data: &PanelData) -> DVector<f64> {
    let p = data.p();
    let mut gram = DMatrix::zeros(p, p);
    let mut rhs = DVector::zeros(p);
    for t in 0..data.t_len() {
        for i in 0..data.n() {
            let row = DVector::from_fn(p, |j, _| data.x(i, t, j));
            gram += &row * row.transpose();
            rhs += &row * data.y()[(i, t)];
        }
    }
    gram.lu().solve(&rhs).unwrap()
}

pub fn rank_one(u: &DVector<f64>, v: &DVector<f64>, scale: f64) -> DMatrix<f64> {
    u * v.transpose() * scale
}
