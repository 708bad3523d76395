//! Fixtures shared by the criterion benches.

use lpqr_core::nalgebra::DMatrix;
use lpqr_core::{generate, Design, DesignSpec, SimInstance};

/// A design-1 panel with a fixed seed.
pub fn d1(n: usize, t_len: usize, p: usize) -> SimInstance {
    generate(&DesignSpec::new(Design::D1, n, t_len, p, 17)).expect("valid design")
}

/// Dense `n×T` matrix with unit-scale entries and a full spectrum.
pub fn noise_matrix(n: usize, t_len: usize) -> DMatrix<f64> {
    d1(n, t_len, 1).data.covariate(0).clone()
}
