//! The radial power `u = |x|^β` solves the p-Laplace equation
//! `div(|∇u|^{p−2}∇u) = F'(u)` with
//! `F(r) = β^p(βp−β−p+n)/((β−1)p) |r|^{(β−1)p/β}`. Here `F` vanishes with its
//! derivative at 0 and `u` touches 0 without being constant, while
//! `F'(r)/|r|^{p−1} ~ |r|^{−p/β}` is unbounded: the growth hypothesis of the
//! rigidity statement cannot be dropped.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::rigidity::loglog_slope;
use crate::error::{Error, Result};
use crate::phi::PhiModel;
use crate::small::{norm_sq, SmallMatrix, MAX_DIM};

const POINTS: usize = 1_000;
const SEED: u64 = 0x00c0_ffee;

#[derive(Clone, Debug, PartialEq)]
pub struct CounterexampleReport {
    pub p: f64,
    pub beta: f64,
    pub n: usize,
    /// Largest `|LHS − F'(u)| / |F'(u)|` over the sampled points.
    pub max_rel_residual: f64,
    pub points: usize,
    /// `div(|∇u|^{p−2}∇u)` at `x = e₁`.
    pub lhs_at_unit: f64,
    /// `F'(1)`.
    pub fprime_at_unit: f64,
    /// Fitted log-log slope of `F'(r)/r^{p−1}` over `r = 2^{-j}`, `j = 1..=40`.
    pub ratio_slope: f64,
    pub expected_slope: f64,
    pub f_at_zero: f64,
    pub fprime_at_zero: f64,
    /// Largest relative mismatch between `F'` and a central difference of `F`.
    pub primitive_mismatch: f64,
}

struct Profile {
    p: f64,
    beta: f64,
    n: f64,
}

impl Profile {
    fn k(&self) -> f64 {
        self.beta * self.p - self.beta - self.p + self.n
    }

    fn f(&self, r: f64) -> f64 {
        let (p, b) = (self.p, self.beta);
        b.powf(p) * self.k() / ((b - 1.0) * p) * r.abs().powf((b - 1.0) * p / b)
    }

    fn fprime(&self, r: f64) -> f64 {
        let (p, b) = (self.p, self.beta);
        if r == 0.0 {
            return 0.0;
        }
        b.powf(p - 1.0) * self.k() * r.abs().powf((b * p - 2.0 * b - p) / b) * r
    }
}

/// Verifies the identity at `POINTS` seeded points with `|x| ∈ [0.1, 2]`, using
/// the library coefficient matrix of `Φ = (2/p) r^{p/2}` and the exact
/// Hessian `β|x|^{β−2}(δ_ij + (β−2) x_i x_j/|x|²)`.
pub fn counterexample_suite(p: f64, beta: f64, n: usize) -> Result<CounterexampleReport> {
    if !(p > 2.0) {
        return Err(Error::Precondition(format!("p > 2 violated (p = {p})")));
    }
    let floor = 2f64.max(p / (p - 2.0));
    if !(beta > floor) {
        return Err(Error::Precondition(format!("beta > max{{2, p/(p-2)}} = {floor} violated (beta = {beta})")));
    }
    if !(1..=MAX_DIM).contains(&n) {
        return Err(Error::Shape(format!("dimension {n} not in 1..=3")));
    }
    let model = PhiModel::p_laplacian(p)?;
    let prof = Profile { p, beta, n: n as f64 };

    let lhs_at = |x: &[f64]| -> Result<f64> {
        let s2 = norm_sq(x);
        let s = s2.sqrt();
        let grad: Vec<f64> = x.iter().map(|xi| beta * s.powf(beta - 2.0) * xi).collect();
        let hess = SmallMatrix::from_fn(n, |i, j| {
            let delta = if i == j { 1.0 } else { 0.0 };
            beta * s.powf(beta - 2.0) * (delta + (beta - 2.0) * x[i] * x[j] / s2)
        });
        let a = model.coefficient_matrix(&grad)?;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += a.get(i, j) * hess.get(i, j);
            }
        }
        Ok(acc)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut max_rel_residual: f64 = 0.0;
    for _ in 0..POINTS {
        let mut x = [0.0; MAX_DIM];
        for v in x.iter_mut().take(n) {
            *v = rng.sample(StandardNormal);
        }
        let len = norm_sq(&x[..n]).sqrt().max(1e-300);
        let radius = rng.random_range(0.1..2.0);
        let x: Vec<f64> = x[..n].iter().map(|v| v / len * radius).collect();
        let u = radius.powf(beta);
        let lhs = lhs_at(&x)?;
        let rhs = prof.fprime(u);
        max_rel_residual = max_rel_residual.max((lhs - rhs).abs() / rhs.abs());
    }

    let mut unit = vec![0.0; n];
    unit[0] = 1.0;
    let lhs_at_unit = lhs_at(&unit)?;

    let ratios: Vec<(f64, f64)> = (1..=40)
        .map(|j| {
            let r = 0.5f64.powi(j);
            (r, prof.fprime(r) / r.powf(p - 1.0))
        })
        .collect();

    let mut primitive_mismatch: f64 = 0.0;
    for k in 1..=20 {
        let r = 0.1 * k as f64;
        let h = 1e-5 * r;
        let fd = (prof.f(r + h) - prof.f(r - h)) / (2.0 * h);
        primitive_mismatch = primitive_mismatch.max((fd - prof.fprime(r)).abs() / prof.fprime(r).abs());
    }

    Ok(CounterexampleReport {
        p,
        beta,
        n,
        max_rel_residual,
        points: POINTS,
        lhs_at_unit,
        fprime_at_unit: prof.fprime(1.0),
        ratio_slope: loglog_slope(&ratios),
        expected_slope: -p / beta,
        f_at_zero: prof.f(0.0),
        fprime_at_zero: prof.fprime(0.0),
        primitive_mismatch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_instance() {
        let rep = counterexample_suite(3.0, 4.0, 2).unwrap();
        assert!(rep.max_rel_residual <= 1e-8, "{}", rep.max_rel_residual);
        assert!((rep.lhs_at_unit - 112.0).abs() < 1e-9);
        assert!((rep.fprime_at_unit - 112.0).abs() < 1e-12);
        assert!((rep.ratio_slope + 0.75).abs() < 0.05);
        assert_eq!(rep.f_at_zero, 0.0);
        assert_eq!(rep.fprime_at_zero, 0.0);
        assert!(rep.primitive_mismatch < 1e-8);
    }

    #[test]
    fn parameter_conditions() {
        assert!(counterexample_suite(2.0, 4.0, 2).is_err());
        // p/(p−2) = 3 for p = 3
        assert!(counterexample_suite(3.0, 3.0, 2).is_err());
        assert!(counterexample_suite(4.0, 2.0, 2).is_err());
        assert!(counterexample_suite(3.0, 4.0, 4).is_err());
        assert!(counterexample_suite(5.0, 2.5, 3).is_ok());
    }
}
