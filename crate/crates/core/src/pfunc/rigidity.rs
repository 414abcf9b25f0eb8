//! Rigidity at a degenerate zero `r₀` of the gauge: if `F(r₀) = F'(r₀) = 0`,
//! `F'` vanishes at `r₀` to order `p̂ − 1`, and the solution touches `r₀`,
//! then the solution is constant.

use super::Gauge;
use crate::ellipticity::{EllipticityCertificate, Regime};
use crate::error::{Error, Result};
use crate::fields::{gradient_of, ScalarField};
use crate::phi::PhiModel;

/// Radii `2^{-j}`, `j = 1..=Z116_RADII`, at which the growth ratio of `F'`
/// near `r₀` is sampled.
pub const Z116_RADII: usize = 40;

/// Radii `2^{-j}` with `j` at least this value enter the slope fit that
/// decides boundedness of the growth ratio.
const SLOPE_FIT_FROM: usize = 20;

/// Largest tolerated negative log-log slope of the ratio as `r → r₀`.
const SLOPE_FLOOR: f64 = -0.05;

/// Points used when sampling the Taylor constant and `ε`.
const SAMPLE_POINTS: usize = 1_000;

/// `p̂ = p` for regime A with `p > 2`, otherwise 2.
pub fn p_hat(cert: &EllipticityCertificate) -> f64 {
    if cert.regime == Regime::A && cert.p > 2.0 {
        cert.p
    } else {
        2.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RigidityInput {
    pub r0: f64,
    pub p_hat: f64,
    /// Touching node; searched for when absent.
    pub x0: Option<usize>,
    /// Tolerance for `|F(r₀)|` and `|F'(r₀)|`.
    pub tol: f64,
    /// Tolerance for touching `r₀` and for constancy of the field.
    pub touch_tol: f64,
}

impl RigidityInput {
    pub fn new(r0: f64, p_hat: f64) -> Self {
        RigidityInput {
            r0,
            p_hat,
            x0: None,
            tol: 1e-9,
            touch_tol: 1e-13,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RigidityVerdict {
    /// Hypotheses hold and a node touches `r₀`; `constant` reports whether
    /// the field equals `r₀` within tolerance, `witness` the worst node.
    Applicable { constant: bool, witness: Option<usize> },
    /// Hypotheses hold but no node touches `r₀`.
    NoTouchingPoint,
    /// Some hypothesis on `F` fails; no claim is made.
    HypothesesFailed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RigidityOutcome {
    pub verdict: RigidityVerdict,
    /// `(2C₀/ε)^{1/p̂}`.
    pub gronwall_constant: f64,
    /// `|F(r) − F(r₀)| ≤ C₀|r − r₀|^{p̂}` sampled on `[r₀ − 1, r₀ + 1]`.
    pub c0: f64,
    /// `Γ(r) ≥ ε r^{p̂/2}` sampled on `(0, M²]`.
    pub epsilon: f64,
    /// `(ρ, max_± |F'(r₀ ± ρ)| / ρ^{p̂−1})` for `ρ = 2^{-j}`.
    pub ratios: Vec<(f64, f64)>,
    /// Least-squares slope of `log ratio` against `log ρ` over small `ρ`.
    pub ratio_slope: f64,
}

impl RigidityOutcome {
    pub fn is_constant(&self) -> Option<bool> {
        match self.verdict {
            RigidityVerdict::Applicable { constant, .. } => Some(constant),
            _ => None,
        }
    }
}

pub(crate) fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Checks the rigidity statement on a field and reports the constants its
/// Gronwall argument would use.
pub fn rigidity_check(model: &PhiModel, gauge: &Gauge, field: &ScalarField, input: &RigidityInput) -> Result<RigidityOutcome> {
    let RigidityInput {
        r0,
        p_hat,
        x0,
        tol,
        touch_tol,
    } = *input;
    if !(p_hat >= 2.0) {
        return Err(Error::Precondition(format!("p_hat = {p_hat} must be >= 2")));
    }

    let ratios: Vec<(f64, f64)> = (1..=Z116_RADII)
        .map(|j| {
            let rho = 0.5f64.powi(j as i32);
            let worst = gauge.derivative(r0 + rho).abs().max(gauge.derivative(r0 - rho).abs());
            (rho, worst / rho.powf(p_hat - 1.0))
        })
        .collect();
    let ratio_slope = loglog_slope(&ratios[SLOPE_FIT_FROM - 1..]);

    let f_r0 = gauge.eval(r0)?;
    let fp_r0 = gauge.derivative(r0);
    let (epsilon, c0) = gronwall_inputs(model, gauge, field, r0, p_hat)?;
    let gronwall_constant = (2.0 * c0 / epsilon).powf(1.0 / p_hat);
    let mut outcome = RigidityOutcome {
        verdict: RigidityVerdict::NoTouchingPoint,
        gronwall_constant,
        c0,
        epsilon,
        ratios,
        ratio_slope,
    };

    if f_r0.abs() > tol || fp_r0.abs() > tol {
        outcome.verdict = RigidityVerdict::HypothesesFailed(format!("F(r0) = {f_r0:e}, F'(r0) = {fp_r0:e} (tol {tol:e})"));
        return Ok(outcome);
    }
    if p_hat > 2.0 {
        let unbounded = outcome.ratios.iter().any(|(_, v)| !v.is_finite()) || ratio_slope < SLOPE_FLOOR;
        if unbounded {
            outcome.verdict = RigidityVerdict::HypothesesFailed(format!(
                "|F'(r)|/|r-r0|^(p_hat-1) grows as r -> r0 (log-log slope {ratio_slope:.3})"
            ));
            return Ok(outcome);
        }
    }

    let u = field.values();
    let touching = match x0 {
        Some(i) if i >= u.len() => return Err(Error::Shape(format!("node {i} outside field of {} nodes", u.len()))),
        Some(i) => (u[i] - r0).abs() <= touch_tol,
        None => u.iter().any(|v| (v - r0).abs() <= touch_tol),
    };
    if !touching {
        return Ok(outcome);
    }
    let (worst, dev) = u
        .iter()
        .enumerate()
        .map(|(i, v)| (i, (v - r0).abs()))
        .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    let constant = dev <= touch_tol;
    outcome.verdict = RigidityVerdict::Applicable {
        constant,
        witness: (!constant).then_some(worst),
    };
    Ok(outcome)
}

/// `ε = ½ min Γ(r)/r^{p̂/2}` over `(0, M²]` with `M = max(1, max|∇u|)`, and the
/// Taylor constant `C₀` on `[r₀ − 1, r₀ + 1]` (`½ sup|F''|` when `p̂ = 2`).
fn gronwall_inputs(model: &PhiModel, gauge: &Gauge, field: &ScalarField, r0: f64, p_hat: f64) -> Result<(f64, f64)> {
    let m = gradient_of(field).max_norm().max(1.0);
    let hi = m * m;
    let lo = 1e-8 * hi;
    let span = (hi / lo).ln();
    let mut ratio_min = f64::INFINITY;
    for k in 0..SAMPLE_POINTS {
        let r = lo * (span * k as f64 / (SAMPLE_POINTS - 1) as f64).exp();
        ratio_min = ratio_min.min(model.gamma(r)? / r.powf(0.5 * p_hat));
    }
    let epsilon = 0.5 * ratio_min;

    let f_r0 = gauge.eval(r0)?;
    let mut c0: f64 = 0.0;
    for k in 0..=SAMPLE_POINTS {
        let r = r0 - 1.0 + 2.0 * k as f64 / SAMPLE_POINTS as f64;
        if p_hat == 2.0 {
            c0 = c0.max(0.5 * gauge.second_derivative(r).abs());
        } else if r != r0 {
            c0 = c0.max((gauge.eval(r)? - f_r0).abs() / (r - r0).abs().powf(p_hat));
        }
    }
    Ok((epsilon, c0))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::SQRT_2;
    use std::sync::Arc;

    use super::*;
    use crate::fields::{sample_field, Grid};
    use crate::pfunc::build_gauge;
    use crate::sources::{ScalarFn, SourceModel};

    fn ac() -> SourceModel {
        SourceModel::reaction(ScalarFn::allen_cahn())
    }

    #[test]
    fn constant_field_is_rigid() {
        let u = ScalarField::constant(Grid::periodic(2, 8, 1.0).unwrap(), 1.0).unwrap();
        let gauge = build_gauge(&ac(), &u).unwrap();
        let out = rigidity_check(&PhiModel::laplacian(), &gauge, &u, &RigidityInput::new(1.0, 2.0)).unwrap();
        assert_eq!(out.is_constant(), Some(true));
        assert!((out.epsilon - 0.5).abs() < 1e-12);
        // sup |3r² − 1| on [0, 2] is 11
        assert!((out.c0 - 5.5).abs() < 1e-12);
        assert!((out.gronwall_constant - 22f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn tanh_never_touches() {
        let g = Grid::interval(-20.0, 20.0, 512).unwrap();
        let u = sample_field(|x| (x[0] / SQRT_2).tanh(), &g).unwrap();
        let gauge = build_gauge(&ac(), &u).unwrap();
        let out = rigidity_check(&PhiModel::laplacian(), &gauge, &u, &RigidityInput::new(1.0, 2.0)).unwrap();
        assert_eq!(out.verdict, RigidityVerdict::NoTouchingPoint);
    }

    #[test]
    fn perturbed_field_is_flagged() {
        let g = Grid::periodic(2, 8, 1.0).unwrap();
        let base = ScalarField::constant(g.clone(), 1.0).unwrap();
        let gauge = build_gauge(&ac(), &base).unwrap();
        let mut v = base.values().to_vec();
        v[13] += 1e-3;
        let bumped = ScalarField::new(g, v).unwrap();
        let out = rigidity_check(&PhiModel::laplacian(), &gauge, &bumped, &RigidityInput::new(1.0, 2.0)).unwrap();
        assert_eq!(
            out.verdict,
            RigidityVerdict::Applicable {
                constant: false,
                witness: Some(13)
            }
        );
    }

    #[test]
    fn hypotheses_checked() {
        let u = ScalarField::constant(Grid::periodic(1, 8, 1.0).unwrap(), 0.5).unwrap();
        let gauge = build_gauge(&ac(), &u).unwrap();
        let out = rigidity_check(&PhiModel::laplacian(), &gauge, &u, &RigidityInput::new(0.5, 2.0)).unwrap();
        assert!(matches!(out.verdict, RigidityVerdict::HypothesesFailed(_)));
    }

    #[test]
    fn growth_ratio_decides_degenerate_case() {
        // F = (r−1)^4 / 4 vanishes to order 3 in F' at 1: bounded for p_hat = 4,
        // unbounded for p_hat = 5.
        let f = ScalarFn::new("quartic", Arc::new(|r: f64| (r - 1.0).powi(3)), Arc::new(|r: f64| 3.0 * (r - 1.0).powi(2)))
            .with_antiderivative(Arc::new(|r: f64| 0.25 * ((r - 1.0).powi(4) - 1.0)));
        let src = SourceModel::reaction(f);
        let u = ScalarField::constant(Grid::periodic(1, 8, 1.0).unwrap(), 1.0).unwrap();
        let gauge = build_gauge(&src, &u).unwrap();
        let p4 = PhiModel::p_laplacian(4.0).unwrap();
        let out = rigidity_check(&p4, &gauge, &u, &RigidityInput::new(1.0, 4.0)).unwrap();
        assert_eq!(out.is_constant(), Some(true));
        assert!(out.ratio_slope.abs() < 1e-9);
        assert!((out.c0 - 0.25).abs() < 1e-6, "{}", out.c0);
        let out = rigidity_check(&p4, &gauge, &u, &RigidityInput::new(1.0, 5.0)).unwrap();
        assert!(matches!(out.verdict, RigidityVerdict::HypothesesFailed(_)));
    }

    #[test]
    fn p_hat_rule() {
        let mut cert = EllipticityCertificate::manual(Regime::A, 3.0, 0.0, 1.0, 0.5, (1.0, 1.0), (1.0, 1.0));
        assert_eq!(p_hat(&cert), 3.0);
        cert.p = 1.5;
        assert_eq!(p_hat(&cert), 2.0);
        cert.regime = Regime::B;
        cert.p = 3.0;
        assert_eq!(p_hat(&cert), 2.0);
    }
}
