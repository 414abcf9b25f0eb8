//! Sampled checks of the structural hypotheses on `g`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{eval_g_with_partials, SourceModel};
use crate::error::{Error, Result};
use crate::small::{dot, norm_sq, Vec3, MAX_DIM};

/// Region over which `∀`-quantified sign conditions are sampled:
/// `|ζ| ≤ zeta_radius` in `ℝⁿ`, each `η_j ∈ [−eta_radius, eta_radius]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleBox {
    pub n: usize,
    pub zeta_radius: f64,
    pub eta_radius: f64,
}

impl Default for SampleBox {
    fn default() -> Self {
        SampleBox {
            n: 2,
            zeta_radius: 1.0,
            eta_radius: 1.0,
        }
    }
}

impl SampleBox {
    pub(crate) fn zeta(&self, rng: &mut ChaCha8Rng) -> Vec3 {
        let mut v = [0.0; MAX_DIM];
        for x in v.iter_mut().take(self.n) {
            *x = rng.sample(StandardNormal);
        }
        let len = norm_sq(&v).sqrt().max(1e-300);
        let radius = self.zeta_radius * rng.random::<f64>();
        v.map(|x| x / len * radius)
    }

    pub(crate) fn eta(&self, rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
        (0..m).map(|_| rng.random_range(-self.eta_radius..=self.eta_radius)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HomogeneityWitness {
    pub zeta: Vec3,
    pub eta: Vec<f64>,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HomogeneityReport {
    pub passed: bool,
    pub beta: f64,
    /// Largest `|g(λζ,η) − λ^β g(ζ,η)| / max(|g(λζ,η)|, |λ^β g(ζ,η)|, 1e-300)`.
    pub max_scaling_error: f64,
    /// Largest `|∇_ζ g·ζ − βg| / (1 + |g|)`.
    pub max_euler_error: f64,
    pub witness: Option<HomogeneityWitness>,
}

const SCALING_TOL: f64 = 1e-9;
const EULER_TOL: f64 = 1e-6;

/// Samples `(ζ, η, λ)` and checks `g(λζ,η) = λ^β g(ζ,η)` (relative `1e-9`)
/// and the Euler identity `∇_ζ g·ζ = βg` (within `1e-6(1+|g|)`). Every sample
/// tries `λ = 2` and `λ = 1/2` before a random `λ ∈ (0.1, 10)`.
pub fn check_homogeneity(src: &SourceModel, samples: usize, seed: u64, region: SampleBox) -> Result<HomogeneityReport> {
    let beta = src
        .beta
        .ok_or_else(|| Error::Precondition("homogeneity check needs a declared degree beta".into()))?;
    let n = region.n;
    let m = src.g.eta_dim().resolve(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = HomogeneityReport {
        passed: true,
        beta,
        max_scaling_error: 0.0,
        max_euler_error: 0.0,
        witness: None,
    };
    for _ in 0..samples {
        let zeta = region.zeta(&mut rng);
        let eta = region.eta(&mut rng, m);
        let base = eval_g_with_partials(src, &zeta[..n], &eta)?;
        let euler = (dot(&base.d_zeta[..n], &zeta[..n]) - beta * base.value).abs() / (1.0 + base.value.abs());
        report.max_euler_error = report.max_euler_error.max(euler);
        let mut failed_lambda = None;
        for lambda in [2.0, 0.5, rng.random_range(0.1..10.0)] {
            let scaled = zeta.map(|z| z * lambda);
            let lhs = eval_g_with_partials(src, &scaled[..n], &eta)?.value;
            let rhs = lambda.powf(beta) * base.value;
            let err = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300);
            let err = if lhs == rhs { 0.0 } else { err };
            report.max_scaling_error = report.max_scaling_error.max(err);
            if err > SCALING_TOL && failed_lambda.is_none() {
                failed_lambda = Some(lambda);
            }
        }
        if euler > EULER_TOL && failed_lambda.is_none() {
            failed_lambda = Some(1.0);
        }
        if let Some(lambda) = failed_lambda {
            report.passed = false;
            if report.witness.is_none() {
                report.witness = Some(HomogeneityWitness { zeta, eta, lambda });
            }
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonotonicityReport {
    pub passed: bool,
    /// Smallest sampled `g(ζ,η̃) − g(ζ,η)` over pairs `η < η̃`.
    pub min_increment: f64,
    /// Smallest sampled `g_η`.
    pub min_g_eta: f64,
    /// `(ζ, η, η̃)` of the first failing pair.
    pub witness: Option<(Vec3, f64, f64)>,
}

const MONOTONE_SLACK: f64 = 1e-12;

/// Samples pairs `η < η̃` and checks that `g(ζ, ·)` does not decrease, with
/// slack `1e-12` scaled by `1 + |g|`. Requires scalar `η`.
pub fn check_monotonicity_eta(src: &SourceModel, samples: usize, seed: u64, region: SampleBox) -> Result<MonotonicityReport> {
    if !src.g.eta_dim().accepts(region.n, 1) {
        return Err(Error::Precondition(format!(
            "monotonicity in eta needs scalar eta ({} takes a vector)",
            src.g.name()
        )));
    }
    let n = region.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = MonotonicityReport {
        passed: true,
        min_increment: f64::INFINITY,
        min_g_eta: f64::INFINITY,
        witness: None,
    };
    for _ in 0..samples {
        let zeta = region.zeta(&mut rng);
        let a = region.eta(&mut rng, 1)[0];
        let b = region.eta(&mut rng, 1)[0];
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let g_lo = eval_g_with_partials(src, &zeta[..n], &[lo])?;
        let g_hi = eval_g_with_partials(src, &zeta[..n], &[hi])?;
        let inc = g_hi.value - g_lo.value;
        report.min_increment = report.min_increment.min(inc);
        report.min_g_eta = report.min_g_eta.min(g_lo.d_eta[0]).min(g_hi.d_eta[0]);
        let slack = MONOTONE_SLACK * (1.0 + g_lo.value.abs().max(g_hi.value.abs()));
        if inc < -slack {
            report.passed = false;
            if report.witness.is_none() {
                report.witness = Some((zeta, lo, hi));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::sources::{Coupling, CouplingEval, EtaDim, ScalarFn};

    fn with_g(g: Coupling, beta: Option<f64>) -> SourceModel {
        SourceModel::new(ScalarFn::zero(), g, beta)
    }

    #[test]
    fn homogeneity_examples() {
        let src = with_g(Coupling::power_drift(3.0, ScalarFn::exp()), Some(3.0));
        let r = check_homogeneity(&src, 500, 1, SampleBox::default()).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.max_euler_error < 1e-12);

        let g = Coupling::new(
            "norm_sq_plus_one",
            EtaDim::Fixed(1),
            Arc::new(|z, _| {
                let mut d = [0.0; 3];
                for (di, zi) in d.iter_mut().zip(z) {
                    *di = 2.0 * zi;
                }
                CouplingEval {
                    value: norm_sq(z) + 1.0,
                    d_zeta: d,
                    d_eta: vec![0.0],
                }
            }),
        );
        let r = check_homogeneity(&with_g(g, Some(2.0)), 50, 1, SampleBox::default()).unwrap();
        assert!(!r.passed);
        assert_eq!(r.witness.unwrap().lambda, 2.0);

        let src = with_g(Coupling::constant_drift(&[1.0, -2.0]), Some(1.0));
        assert!(check_homogeneity(&src, 500, 3, SampleBox::default()).unwrap().passed);

        assert!(check_homogeneity(&with_g(Coupling::zero(), None), 5, 1, SampleBox::default()).is_err());
    }

    #[test]
    fn monotonicity_examples() {
        let region = SampleBox::default();
        let up = with_g(Coupling::power_drift(3.0, ScalarFn::exp()), Some(3.0));
        assert!(check_monotonicity_eta(&up, 500, 2, region).unwrap().passed);

        let down = with_g(Coupling::power_drift(3.0, ScalarFn::identity().negate()), Some(3.0));
        let r = check_monotonicity_eta(&down, 500, 2, region).unwrap();
        assert!(!r.passed);
        let (_, lo, hi) = r.witness.unwrap();
        assert!(lo < hi);

        let flat = with_g(Coupling::zero(), None);
        let r = check_monotonicity_eta(&flat, 500, 2, region).unwrap();
        assert!(r.passed);
        assert_eq!(r.min_increment, 0.0);

        let vector = with_g(Coupling::bilinear_drift(), Some(1.0));
        assert!(check_monotonicity_eta(&vector, 5, 2, region).is_err());
    }
}
