//! Drift `B`, remainder `ℛ`, and the residual of the elliptic inequality
//!
//! ```text
//! |∇u|² Σ_ij ∂_j(d_ij ∂_i P) + B·∇P ≥ |∇P|²/(2Λ) + ℛ   on {∇u ≠ 0}.
//! ```

use rayon::prelude::*;

use super::{admissible, build_gauge, default_delta, Gauge};
use crate::error::{Error, Result};
use crate::fields::{derivative_along, gradient_of, MaskedField, ScalarField, VectorField};
use crate::phi::PhiModel;
use crate::small::{dot, norm_sq, Vec3, MAX_DIM};
use crate::solver::residual_field;
use crate::sources::{check_monotonicity_eta, eval_g_with_partials, beta_phi_minus_lambda, SOperator, SampleBox, SourceModel};

fn positive_lambda(model: &PhiModel, r: f64) -> Result<f64> {
    let lambda = model.lambda(r)?;
    if lambda > 0.0 {
        Ok(lambda)
    } else {
        Err(Error::Monotonicity { floor: lambda, at: r })
    }
}

/// `B_i = −2f(u)/Λ · (1 + rΦ''/Φ') u_i − (r/Λ) g_{ζ_i}(∇u, Su)` with `r = |∇u|²`.
pub fn drift_at(model: &PhiModel, src: &SourceModel, s: &SOperator, u: f64, grad: &[f64], x: &[f64]) -> Result<Vec3> {
    let n = grad.len();
    let r = norm_sq(grad);
    let lambda = positive_lambda(model, r)?;
    let d = model.derivatives(r)?;
    let su = s.value(u, x);
    let g = eval_g_with_partials(src, grad, &su)?;
    let radial = -2.0 * src.f.eval(u) / lambda * (1.0 + r * d.second / d.first);
    let mut out = [0.0; MAX_DIM];
    for i in 0..n {
        out[i] = radial * grad[i] - r / lambda * g.d_zeta[i];
    }
    Ok(out)
}

/// `ℛ = −2fg r/Φ' + 2r Σ_k Σ_j g_{η_j} ∂_k S^{[j]}u · u_k + (2fr/Λ) Σ_j g_{ζ_j} u_j`.
pub fn remainder_at(model: &PhiModel, src: &SourceModel, s: &SOperator, u: f64, grad: &[f64], x: &[f64]) -> Result<f64> {
    let r = norm_sq(grad);
    let lambda = positive_lambda(model, r)?;
    let phi1 = model.phi1(r)?;
    let se = s.eval(u, grad, x);
    let g = eval_g_with_partials(src, grad, &se.value)?;
    let f = src.f.eval(u);
    let transport: f64 = g
        .d_eta
        .iter()
        .zip(&se.jac)
        .map(|(ge, row)| ge * dot(&row[..grad.len()], grad))
        .sum();
    Ok(-2.0 * f * g.value * r / phi1 + 2.0 * r * transport + 2.0 * f * r / lambda * dot(&g.d_zeta[..grad.len()], grad))
}

fn resolve_delta(grads: &VectorField, delta: Option<f64>) -> f64 {
    delta.unwrap_or_else(|| default_delta(grads.max_norm()))
}

/// Nodes where the pointwise quantities are evaluated: admissible and
/// `|∇u| > δ`.
fn active(field: &ScalarField, grads: &VectorField, delta: f64, i: usize) -> bool {
    admissible(field, i) && norm_sq(grads.get(i)).sqrt() > delta
}

/// `B` on `{|∇u| > δ}` (other nodes hold NaN). `δ` defaults to
/// `max(1e-6, 1e-3·max|∇u|)`.
pub fn drift_field(model: &PhiModel, src: &SourceModel, s: &SOperator, field: &ScalarField, delta: Option<f64>) -> Result<VectorField> {
    let grads = gradient_of(field);
    let delta = resolve_delta(&grads, delta);
    let grid = field.grid();
    let dim = grid.dim();
    let values: Vec<Vec3> = (0..field.len())
        .into_par_iter()
        .map(|i| {
            if !active(field, &grads, delta, i) {
                return Ok([f64::NAN; MAX_DIM]);
            }
            drift_at(model, src, s, field.values()[i], grads.get(i), &grid.coord(i)[..dim])
        })
        .collect::<Result<_>>()?;
    VectorField::new(grid.clone(), values)
}

/// `ℛ` on `{|∇u| > δ}`, masked elsewhere.
pub fn remainder_field(model: &PhiModel, src: &SourceModel, s: &SOperator, field: &ScalarField, delta: Option<f64>) -> Result<MaskedField> {
    let grads = gradient_of(field);
    let delta = resolve_delta(&grads, delta);
    let grid = field.grid();
    let dim = grid.dim();
    let values: Vec<f64> = (0..field.len())
        .into_par_iter()
        .map(|i| {
            if !active(field, &grads, delta, i) {
                return Ok(f64::NAN);
            }
            remainder_at(model, src, s, field.values()[i], grads.get(i), &grid.coord(i)[..dim])
        })
        .collect::<Result<_>>()?;
    MaskedField::new(grid.clone(), values)
}

#[derive(Clone, Debug)]
pub struct LowerBoundReport {
    pub passed: bool,
    /// Smallest `ℛ − 2fg r (βΦ' − Λ)/(ΛΦ')` over active nodes.
    pub min_gap: f64,
    pub argmin: Option<usize>,
    pub checked: usize,
}

const LOWER_BOUND_SLACK: f64 = 1e-9;

/// Checks `ℛ ≥ 2fg r (βΦ' − Λ)/(ΛΦ')` with `S = identity` at every active
/// node. Requires a declared `β` and `g` nondecreasing in `η` on the field's
/// range.
pub fn remainder_lower_bound_check(family: &PhiModel, src: &SourceModel, field: &ScalarField, delta: Option<f64>) -> Result<LowerBoundReport> {
    let beta = src
        .beta
        .ok_or_else(|| Error::Precondition("lower bound needs a declared degree beta".into()))?;
    let grads = gradient_of(field);
    let region = SampleBox {
        n: field.grid().dim(),
        zeta_radius: grads.max_norm().max(1e-12),
        eta_radius: field.max_abs().max(1e-12),
    };
    let mono = check_monotonicity_eta(src, 2_000, 0x6e7a, region)?;
    if !mono.passed || mono.min_g_eta < 0.0 {
        return Err(Error::Precondition(format!(
            "g must be nondecreasing in eta (sampled g_eta minimum {:e})",
            mono.min_g_eta
        )));
    }
    let rem = remainder_field(family, src, &SOperator::Identity, field, delta)?;
    let gaps: Vec<f64> = (0..field.len())
        .into_par_iter()
        .map(|i| {
            let Some(rv) = rem.get(i) else {
                return Ok(f64::NAN);
            };
            let grad = grads.get(i);
            let u = field.values()[i];
            let r = norm_sq(grad);
            let fg = src.f.eval(u) * eval_g_with_partials(src, grad, &[u])?.value;
            let rhs = 2.0 * fg * r * beta_phi_minus_lambda(family, beta, r)? / (family.lambda(r)? * family.phi1(r)?);
            let gap = rv - rhs;
            Ok(if gap >= -LOWER_BOUND_SLACK * (1.0 + rhs.abs()) { gap.max(0.0) } else { gap })
        })
        .collect::<Result<_>>()?;
    let gaps = MaskedField::new(field.grid().clone(), gaps)?;
    let (argmin, min_gap) = match gaps.argmin() {
        Some((i, v)) => (Some(i), v),
        None => (None, 0.0),
    };
    Ok(LowerBoundReport {
        passed: min_gap >= 0.0,
        min_gap,
        argmin,
        checked: gaps.active_count(),
    })
}

#[derive(Clone, Debug)]
pub struct LemmaReport {
    /// Left side minus right side of the inequality; masked off `{|∇u| > δ}`.
    pub residual: MaskedField,
    pub min_residual: f64,
    pub argmin: Option<usize>,
    pub delta: f64,
    pub h: f64,
    /// Sup norm of the discrete PDE residual of the input field.
    pub pde_residual: f64,
    pub warnings: Vec<String>,
}

/// Evaluates the inequality residual
/// `r Σ ∂_j(d_ij ∂_i P) + B·∇P − |∇P|²/(2Λ) − ℛ` at every active node. The
/// divergence is taken in conservative face form, as in
/// [`crate::fields::flux_divergence`].
pub fn lemma_residual(model: &PhiModel, src: &SourceModel, s: &SOperator, field: &ScalarField, delta: Option<f64>) -> Result<LemmaReport> {
    let gauge = build_gauge(src, field)?;
    lemma_residual_with(model, src, s, &gauge, field, delta)
}

fn lemma_residual_with(model: &PhiModel, src: &SourceModel, s: &SOperator, gauge: &Gauge, field: &ScalarField, delta: Option<f64>) -> Result<LemmaReport> {
    let grid = field.grid();
    let dim = grid.dim();
    let u = field.values();
    let grads = gradient_of(field);
    let delta = resolve_delta(&grads, delta);
    let p: Vec<f64> = (0..u.len())
        .into_par_iter()
        .map(|i| Ok(model.gamma(norm_sq(grads.get(i)))? - 2.0 * gauge.eval(u[i])?))
        .collect::<Result<_>>()?;
    let gp: Vec<Vec<f64>> = (0..dim).map(|axis| derivative_along(&p, grid, axis)).collect();
    let gu: Vec<Vec<f64>> = (0..dim).map(|axis| grads.component(axis)).collect();

    // div[i] = Σ_j ∂_j (Σ_i d_ij ∂_i P), NaN where a face matrix is undefined
    let mut div = vec![0.0; u.len()];
    for j in 0..dim {
        let h = grid.spacing(j);
        let flux: Vec<f64> = (0..u.len())
            .into_par_iter()
            .map(|a| {
                let Some(b) = grid.neighbor(a, j, 1) else {
                    return f64::NAN;
                };
                let mut sigma = [0.0; MAX_DIM];
                let mut dp = [0.0; MAX_DIM];
                for l in 0..dim {
                    if l == j {
                        sigma[l] = (u[b] - u[a]) / h;
                        dp[l] = (p[b] - p[a]) / h;
                    } else {
                        sigma[l] = 0.5 * (gu[l][a] + gu[l][b]);
                        dp[l] = 0.5 * (gp[l][a] + gp[l][b]);
                    }
                }
                match model.normalized_matrix(&sigma[..dim]) {
                    Ok(d) => (0..dim).map(|i| d.get(i, j) * dp[i]).sum(),
                    Err(_) => f64::NAN,
                }
            })
            .collect();
        div.par_iter_mut().enumerate().for_each(|(i, o)| match grid.neighbor(i, j, -1) {
            Some(m) => *o += (flux[i] - flux[m]) / h,
            None => *o = f64::NAN,
        });
    }

    let values: Vec<f64> = (0..u.len())
        .into_par_iter()
        .map(|i| {
            if !active(field, &grads, delta, i) || div[i].is_nan() {
                return Ok(f64::NAN);
            }
            let grad = grads.get(i);
            let x = grid.coord(i);
            let r = norm_sq(grad);
            let lambda = positive_lambda(model, r)?;
            let b = drift_at(model, src, s, u[i], grad, &x[..dim])?;
            let dpi: Vec<f64> = (0..dim).map(|l| gp[l][i]).collect();
            let rem = remainder_at(model, src, s, u[i], grad, &x[..dim])?;
            Ok(r * div[i] + dot(&b[..dim], &dpi) - norm_sq(&dpi) / (2.0 * lambda) - rem)
        })
        .collect::<Result<_>>()?;
    let residual = MaskedField::new(grid.clone(), values)?;
    let (argmin, min_residual) = match residual.argmin() {
        Some((i, v)) => (Some(i), v),
        None => (None, f64::INFINITY),
    };

    let h = grid.max_spacing();
    let pde = residual_field(model, src, s, field)?;
    let pde_residual = pde.max_abs();
    let mut warnings = Vec::new();
    if pde_residual > 10.0 * h * h {
        warnings.push(format!(
            "input is not a discrete solution: PDE residual {pde_residual:e} exceeds 10h^2 = {:e}",
            10.0 * h * h
        ));
    }
    if residual.active_count() == 0 {
        warnings.push(format!("no node with |grad u| > {delta:e}"));
    }
    Ok(LemmaReport {
        residual,
        min_residual,
        argmin,
        delta,
        h,
        pde_residual,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::SQRT_2;
    use std::sync::Arc;

    use super::*;
    use crate::fields::{sample_field, Grid};
    use crate::sources::{Coupling, ScalarFn};

    #[test]
    fn drift_examples() {
        let x = [0.0, 0.0];
        let ac = SourceModel::reaction(ScalarFn::allen_cahn());
        let b = drift_at(&PhiModel::laplacian(), &ac, &SOperator::Identity, 0.5, &[0.3, -0.2], &x).unwrap();
        let f = 0.125 - 0.5;
        assert!((b[0] + 2.0 * f * 0.3).abs() < 1e-15 && (b[1] - 2.0 * f * 0.2).abs() < 1e-15);

        let none = SourceModel::reaction(ScalarFn::zero());
        let b = drift_at(&PhiModel::laplacian(), &none, &SOperator::Identity, 0.5, &[0.3, -0.2], &x).unwrap();
        assert_eq!(b, [0.0; 3]);

        let one = SourceModel::reaction(ScalarFn::new("one", Arc::new(|_| 1.0), Arc::new(|_| 0.0)));
        let p4 = PhiModel::p_laplacian(4.0).unwrap();
        let b = drift_at(&p4, &one, &SOperator::Identity, 0.0, &[1.0, 0.0], &x).unwrap();
        assert!((b[0] + 4.0 / 3.0).abs() < 1e-15 && b[1] == 0.0);
    }

    #[test]
    fn remainder_vanishes_without_coupling() {
        let g = Grid::periodic(2, 16, 2.0).unwrap();
        let u = sample_field(|x| (x[0] * 3.0).sin() + x[1].cos(), &g).unwrap();
        let src = SourceModel::reaction(ScalarFn::allen_cahn());
        let rem = remainder_field(&PhiModel::laplacian(), &src, &SOperator::Identity, &u, None).unwrap();
        assert!(rem.active_count() > 0);
        assert!(rem.iter_active().all(|(_, v)| v == 0.0));
    }

    #[test]
    fn remainder_constant_drift_example() {
        let src = SourceModel::new(ScalarFn::allen_cahn(), Coupling::constant_drift(&[1.0, 0.0]), Some(1.0));
        let s = SOperator::Map(ScalarFn::identity());
        let r = remainder_at(&PhiModel::laplacian(), &src, &s, 0.7, &[2.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!((r - 64.0).abs() < 1e-12, "{r}");
    }

    #[test]
    fn remainder_power_s_example() {
        // f = 0, g = |ζ|² η: ℛ/(2r) = q g_η |u|^{q−1} r
        let src = SourceModel::new(ScalarFn::zero(), Coupling::power_drift(2.0, ScalarFn::identity()), Some(2.0));
        let s = SOperator::power_u(3.0).unwrap();
        let grad = [0.4, -0.3];
        let (u, r) = (-1.5f64, 0.25);
        let rem = remainder_at(&PhiModel::laplacian(), &src, &s, u, &grad, &[0.0, 0.0]).unwrap();
        let expect = 2.0 * r * 3.0 * r * u.abs().powi(2) * r;
        assert!((rem - expect).abs() < 1e-12 * expect.abs(), "{rem} vs {expect}");
    }

    #[test]
    fn lower_bound_holds_for_monotone_power_drift() {
        let g = Grid::periodic(2, 24, 6.0).unwrap();
        let u = sample_field(|x| 0.5 * (x[0]).sin() + 0.3 * (2.0 * x[1]).cos(), &g).unwrap();
        let family = PhiModel::from_triples(&[(1.0, 0.5, 2.5), (0.5, 0.5, 3.0)]).unwrap();
        let src = SourceModel::new(ScalarFn::allen_cahn(), Coupling::power_drift(2.5, ScalarFn::exp()), Some(2.5));
        let rep = remainder_lower_bound_check(&family, &src, &u, None).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.checked > 0);

        let plain = SourceModel::new(ScalarFn::allen_cahn(), Coupling::zero(), Some(1.0));
        let rep = remainder_lower_bound_check(&family, &plain, &u, None).unwrap();
        assert_eq!(rep.min_gap, 0.0);

        let down = SourceModel::new(ScalarFn::allen_cahn(), Coupling::power_drift(2.0, ScalarFn::identity().negate()), Some(2.0));
        assert!(remainder_lower_bound_check(&family, &down, &u, None).is_err());
    }

    #[test]
    fn lemma_residual_tanh_is_small() {
        let g = Grid::interval(-20.0, 20.0, 512).unwrap();
        let u = sample_field(|x| (x[0] / SQRT_2).tanh(), &g).unwrap();
        let src = SourceModel::reaction(ScalarFn::allen_cahn());
        let rep = lemma_residual(&PhiModel::laplacian(), &src, &SOperator::Identity, &u, None).unwrap();
        let h = rep.h;
        let worst = rep.residual.iter_active().fold(0.0f64, |m, (_, v)| m.max(v.abs()));
        assert!(worst <= 10.0 * h * h, "{worst}");
        assert!(rep.warnings.is_empty(), "{:?}", rep.warnings);
    }

    #[test]
    fn lemma_residual_masks_constant_field() {
        let g = Grid::periodic(2, 8, 1.0).unwrap();
        let u = ScalarField::constant(g, 1.0).unwrap();
        let src = SourceModel::reaction(ScalarFn::allen_cahn());
        let rep = lemma_residual(&PhiModel::laplacian(), &src, &SOperator::Identity, &u, None).unwrap();
        assert_eq!(rep.residual.active_count(), 0);
        assert_eq!(rep.warnings.len(), 1);
    }
}
