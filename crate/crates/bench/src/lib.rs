//! Fixtures shared by the benchmarks.

use fedwind_core::forecast::{ClientDataset, NormConfig};
use fedwind_core::data::{generate_synthetic_fleet, FleetSpec};
use fedwind_core::{rng, Matrix};
use rand::Rng;

/// `n` uniform points in `[-1, 1]^d`.
pub fn uniform_points(n: usize, d: usize, seed: u64) -> Matrix {
    let mut r = rng::stream(seed, &[0xBE]);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    Matrix::from_rows(&rows)
}

/// Labels cycling through `0..k`.
pub fn round_robin_labels(n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|i| i % k).collect()
}

/// One synthetic turbine split into train and validation windows.
pub fn client(steps: usize, seed: u64) -> ClientDataset {
    let fleet = generate_synthetic_fleet(&FleetSpec::three_archetypes(3, steps, seed)).expect("valid preset");
    ClientDataset::from_series(&fleet.turbines()[0], 0.7, &NormConfig::default()).expect("long enough series")
}
