//! Closed-form solutions used as references.

use std::f64::consts::SQRT_2;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::{sample_field, Grid, ScalarField};
use crate::small::{Vec3, MAX_DIM};

pub type GradientFn = Arc<dyn Fn(&[f64]) -> Vec3 + Send + Sync>;

/// A sampled solution together with its exact gradient.
#[derive(Clone)]
pub struct AnalyticSolution {
    pub name: &'static str,
    pub field: ScalarField,
    pub gradient: GradientFn,
}

/// `u(x) = tanh(x/√2)`, the heteroclinic of `u'' = u³ − u`, on a clamped 1D grid.
pub fn tanh_heteroclinic(grid: &Grid) -> Result<AnalyticSolution> {
    if grid.dim() != 1 || grid.is_periodic() {
        return Err(Error::Shape("the heteroclinic lives on a clamped 1D grid".into()));
    }
    Ok(AnalyticSolution {
        name: "tanh",
        field: sample_field(|x| (x[0] / SQRT_2).tanh(), grid)?,
        gradient: Arc::new(|x: &[f64]| {
            let s = 1.0 / (x[0] / SQRT_2).cosh();
            let mut g = [0.0; MAX_DIM];
            g[0] = s * s / SQRT_2;
            g
        }),
    })
}

/// `u ≡ a`; a solution whenever `f(a) = 0` and `g(0, Sa) = 0`.
pub fn constant_solution(grid: &Grid, a: f64) -> Result<AnalyticSolution> {
    Ok(AnalyticSolution {
        name: "constant",
        field: ScalarField::constant(grid.clone(), a)?,
        gradient: Arc::new(|_: &[f64]| [0.0; MAX_DIM]),
    })
}
