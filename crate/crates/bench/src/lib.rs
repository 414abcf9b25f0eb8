//! Shared fixtures for the criterion benchmarks.

use std::f64::consts::PI;

use modica_core::fields::{sample_field, Grid, ScalarField};
use modica_core::PhiModel;

/// A smooth periodic field on an `n^dim` grid of side `2π`.
pub fn wavy_field(dim: usize, n: usize) -> ScalarField {
    let grid = Grid::periodic(dim, n, 2.0 * PI).expect("valid grid");
    sample_field(|x| x.iter().enumerate().map(|(k, v)| ((k + 1) as f64 * v).sin()).sum::<f64>() * 0.5, &grid)
        .expect("finite samples")
}

/// A two-term `(p, q)`-growth family with nonzero shifts.
pub fn mixed_family() -> PhiModel {
    PhiModel::from_triples(&[(1.0, 0.5, 2.0), (0.5, 0.5, 4.0)]).expect("valid family")
}

/// Cosine seed for the 1D Allen-Cahn solve on `[0, 4π)`.
pub fn allen_cahn_seed(n: usize) -> ScalarField {
    let grid = Grid::periodic(1, n, 4.0 * PI).expect("valid grid");
    sample_field(|x| 0.5 * (x[0] / 2.0).cos(), &grid).expect("finite samples")
}
