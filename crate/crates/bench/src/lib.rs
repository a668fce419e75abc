//! Fixtures shared by the benchmarks.

use nalgebra::{DMatrix, DVector};
use qcopula::sampler::ChainConfig;
use qcopula::sim::{concentration_data, SimulatedData};

/// A fixed AR(1)-style correlation of size `dim`.
pub fn ar1(dim: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| rho.powi((i as i32 - j as i32).abs()))
}

pub fn zeros(dim: usize) -> DVector<f64> {
    DVector::zeros(dim)
}

/// Concentration-study data with `p` study columns and half missing.
pub fn study_data(n: usize, p: usize) -> SimulatedData {
    concentration_data(1, 0, n, p, 0.5).expect("simulated data")
}

/// A short chain for timing sweeps.
pub fn short_chain(iters: usize) -> ChainConfig {
    ChainConfig { iters, burnin: iters / 2, record_imputations: false, seed: 1, ..Default::default() }
}
