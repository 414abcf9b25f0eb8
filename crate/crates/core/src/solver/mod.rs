//! Discrete residual of `div(Φ'(|∇u|²)∇u) = f(u) + g(∇u, Su)` and a damped
//! Newton solver for it.

pub mod analytic;
mod jacobian;
mod sparse;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{derivative_along, flux_divergence, Grid, ScalarField};
use crate::phi::PhiModel;
use crate::sources::{eval_g_with_partials, SOperator, SourceModel};

pub use analytic::{constant_solution, tanh_heteroclinic, AnalyticSolution, GradientFn};
pub use jacobian::{dense_fd_jacobian, distance2_coloring, neighborhood, picard_matrix, ColoredJacobian};
pub use sparse::{gmres, CsrMatrix, GmresOutcome, Preconditioner};

/// Maximum number of step halvings in the line search.
pub const MAX_HALVINGS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JacobianKind {
    /// Colored central differences of the full residual.
    NumericColored,
    /// Frozen-coefficient linearization (see [`picard_matrix`]).
    Picard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PreconditionerKind {
    Jacobi,
    Ilu0,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveParams {
    pub max_iters: usize,
    /// Target for the sup norm of the residual.
    pub tol: f64,
    /// Initial step length of the line search.
    pub damping: f64,
    pub jacobian: JacobianKind,
    pub preconditioner: PreconditionerKind,
    /// Relative tolerance of each linear solve.
    pub linear_tol: f64,
    pub restart: usize,
    pub max_linear_iters: usize,
    /// Warn when `max|∇u|` of the result exceeds this bound.
    pub gradient_cap: Option<f64>,
    /// Initial pseudo-time step `Δt₀`: each linear system becomes
    /// `(J − I/Δt)δ = −R`, an implicit Euler step of `u_t = R(u)`, with `Δt`
    /// growing as the residual falls. `None` gives plain Newton.
    pub pseudo_time: Option<f64>,
}

impl Default for SolveParams {
    fn default() -> Self {
        SolveParams {
            max_iters: 50,
            tol: 1e-10,
            damping: 1.0,
            jacobian: JacobianKind::NumericColored,
            preconditioner: PreconditionerKind::Ilu0,
            linear_tol: 1e-9,
            restart: 80,
            max_linear_iters: 4000,
            gradient_cap: None,
            pseudo_time: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub field: ScalarField,
    /// Sup norm of the final residual.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Residual sup norm before the first and after every accepted step.
    pub history: Vec<f64>,
    pub linear_iterations: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Residual values at every node; 0 on clamped boundary nodes, whose values
/// act as Dirichlet data.
pub(crate) fn residual_values(
    model: &PhiModel,
    src: &SourceModel,
    s: &SOperator,
    grid: &Grid,
    u: &[f64],
) -> Result<Vec<f64>> {
    let field = ScalarField::new(grid.clone(), u.to_vec())?;
    let div = flux_divergence(model, &field)?.into_values();
    let dim = grid.dim();
    let couples = src.couples();
    let grads: Vec<Vec<f64>> = if couples {
        (0..dim).map(|axis| derivative_along(u, grid, axis)).collect()
    } else {
        Vec::new()
    };
    let clamped = !grid.is_periodic();
    div.into_par_iter()
        .enumerate()
        .map(|(i, d)| {
            if clamped && grid.is_boundary(i) {
                return Ok(0.0);
            }
            let mut r = d - src.f.eval(u[i]);
            if couples {
                let zeta: Vec<f64> = grads.iter().map(|g| g[i]).collect();
                let x = grid.coord(i);
                let eta = s.value(u[i], &x[..dim]);
                r -= eval_g_with_partials(src, &zeta, &eta)?.value;
            }
            if r.is_finite() {
                Ok(r)
            } else {
                Err(Error::NonFinite { what: "residual", index: i })
            }
        })
        .collect()
}

/// `div(Φ'(|∇u|²)∇u) − f(u) − g(∇u, Su)` on the grid.
pub fn residual_field(model: &PhiModel, src: &SourceModel, s: &SOperator, field: &ScalarField) -> Result<ScalarField> {
    let values = residual_values(model, src, s, field.grid(), field.values())?;
    ScalarField::new(field.grid().clone(), values)
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Damped Newton iteration from `seed`. Each step solves the linearized
/// system with GMRES and backtracks (halving up to [`MAX_HALVINGS`] times)
/// until the residual sup norm decreases, so `history` is strictly
/// decreasing.
pub fn solve_newton(
    model: &PhiModel,
    src: &SourceModel,
    s: &SOperator,
    seed: &ScalarField,
    params: &SolveParams,
) -> Result<SolveOutcome> {
    if !(params.tol > 0.0 && params.damping > 0.0 && params.damping <= 1.0) {
        return Err(Error::Precondition(format!(
            "solver needs tol > 0 and damping in (0, 1], got tol = {}, damping = {}",
            params.tol, params.damping
        )));
    }
    let grid = seed.grid().clone();
    let mut u = seed.values().to_vec();
    let mut res = residual_values(model, src, s, &grid, &u)?;
    let mut norm = sup(&res);
    let mut history = vec![norm];
    let mut linear_iterations = Vec::new();
    let mut warnings = Vec::new();
    let colored = (params.jacobian == JacobianKind::NumericColored).then(|| ColoredJacobian::new(&grid));
    let mut iterations = 0;
    let clamped = !grid.is_periodic();
    let mut dt = params.pseudo_time;

    while norm > params.tol && iterations < params.max_iters {
        let mut jac = match &colored {
            Some(cj) => cj.assemble(model, src, s, &u)?,
            None => picard_matrix(model, src, &grid, &u)?,
        };
        if let Some(dt) = dt {
            for i in 0..u.len() {
                if !(clamped && grid.is_boundary(i)) {
                    jac.add(i, i, -1.0 / dt);
                }
            }
        }
        let pre = match params.preconditioner {
            PreconditionerKind::Jacobi => Preconditioner::jacobi(&jac)?,
            PreconditionerKind::Ilu0 => Preconditioner::ilu0(&jac)?,
        };
        let rhs: Vec<f64> = res.iter().map(|r| -r).collect();
        let mut delta = vec![0.0; u.len()];
        let lin = gmres(
            &jac,
            &rhs,
            &mut delta,
            &pre,
            params.linear_tol,
            params.restart,
            params.max_linear_iters,
        );
        linear_iterations.push(lin.iterations);
        if !lin.converged {
            warnings.push(format!(
                "iteration {}: linear solve stopped at relative residual {:e}",
                iterations + 1,
                lin.relative_residual
            ));
        }

        let mut step = params.damping;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + step * d).collect();
            // a step into the domain where Φ or f blow up counts as a rejection
            if let Ok(r) = residual_values(model, src, s, &grid, &trial) {
                let n = sup(&r);
                if n < norm {
                    accepted = Some((trial, r, n));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((trial, r, n)) = accepted else {
            warnings.push(format!(
                "line search failed after {MAX_HALVINGS} halvings at residual {norm:e}"
            ));
            break;
        };
        // switched evolution relaxation: Δt grows with the residual reduction
        dt = dt.map(|t| t * norm / n);
        u = trial;
        res = r;
        norm = n;
        history.push(norm);
        iterations += 1;
    }

    let converged = norm <= params.tol;
    if !converged && iterations >= params.max_iters {
        warnings.push(format!("no convergence in {} iterations (residual {norm:e})", params.max_iters));
    }
    if converged && history.len() >= 3 {
        // superlinear tail: r_{k+1} ≤ C r_k^{3/2} with the same C for the last two steps
        let k = history.len();
        let ratio = |a: f64, b: f64| if a > 0.0 { b / a.powf(1.5) } else { 0.0 };
        let (c1, c2) = (ratio(history[k - 3], history[k - 2]), ratio(history[k - 2], history[k - 1]));
        if c2 > 1e3 * c1.max(1.0) {
            warnings.push(format!("convergence tail is not superlinear ({c1:e} -> {c2:e})"));
        }
    }
    let field = ScalarField::new(grid, u)?;
    if let Some(cap) = params.gradient_cap {
        let g = crate::fields::gradient_of(&field).max_norm();
        if g > cap {
            warnings.push(format!("max |grad u| = {g:e} leaves the certified range M = {cap:e}"));
        }
    }
    Ok(SolveOutcome {
        field,
        residual_norm: norm,
        iterations,
        converged,
        history,
        linear_iterations,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::fields::sample_field;
    use crate::sources::ScalarFn;

    #[test]
    fn constant_equilibria_have_zero_residual() {
        let src = SourceModel::reaction(ScalarFn::allen_cahn());
        let g = Grid::periodic(2, 8, 1.0).unwrap();
        for a in [-1.0, 0.0, 1.0] {
            let u = ScalarField::constant(g.clone(), a).unwrap();
            let r = residual_field(&PhiModel::laplacian(), &src, &SOperator::Identity, &u).unwrap();
            assert_eq!(r.max_abs(), 0.0);
        }
    }

    #[test]
    fn linear_problem_converges_in_one_step() {
        // u'' = u + sin x has the periodic solution −sin(x)/2 (up to O(h²))
        let src = SourceModel::new(
            ScalarFn::new(
                "shifted",
                std::sync::Arc::new(|u: f64| u),
                std::sync::Arc::new(|_| 1.0),
            ),
            crate::sources::Coupling::zero(),
            None,
        );
        let g = Grid::periodic(1, 64, 2.0 * PI).unwrap();
        let seed = sample_field(|x| x[0].cos(), &g).unwrap();
        let out = solve_newton(&PhiModel::laplacian(), &src, &SOperator::Identity, &seed, &SolveParams::default()).unwrap();
        assert!(out.converged);
        assert!(out.iterations <= 2, "{}", out.iterations);
        assert!(out.history.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn allen_cahn_1d_periodic() {
        let src = SourceModel::reaction(ScalarFn::allen_cahn());
        let g = Grid::periodic(1, 128, 4.0 * PI).unwrap();
        let seed = sample_field(|x| 0.5 * (x[0] / 2.0).cos(), &g).unwrap();
        for kind in [JacobianKind::NumericColored, JacobianKind::Picard] {
            let params = SolveParams {
                jacobian: kind,
                pseudo_time: Some(1.0),
                ..SolveParams::default()
            };
            let out = solve_newton(&PhiModel::laplacian(), &src, &SOperator::Identity, &seed, &params).unwrap();
            assert!(out.converged, "{kind:?} {:?}", out.history);
            assert!(out.field.max() - out.field.min() > 0.1);
            assert!(out.history.windows(2).all(|w| w[1] < w[0]));
        }
    }

    #[test]
    fn plain_newton_from_small_cosine_falls_to_zero() {
        let src = SourceModel::reaction(ScalarFn::allen_cahn());
        let g = Grid::periodic(1, 128, 4.0 * PI).unwrap();
        let seed = sample_field(|x| 0.5 * (x[0] / 2.0).cos(), &g).unwrap();
        let out = solve_newton(&PhiModel::laplacian(), &src, &SOperator::Identity, &seed, &SolveParams::default()).unwrap();
        assert!(out.converged);
        assert!(out.field.max_abs() < 1e-8);
    }

    #[test]
    fn constant_limits() {
        let src = SourceModel::reaction(ScalarFn::allen_cahn());
        let lap = PhiModel::laplacian();
        let g = Grid::periodic(1, 64, 3.0).unwrap();
        let out = solve_newton(&lap, &src, &SOperator::Identity, &ScalarField::constant(g.clone(), 0.9).unwrap(), &SolveParams::default()).unwrap();
        assert!(out.converged);
        assert!(out.field.values().iter().all(|v| (v - 1.0).abs() < 1e-10));

        // below the bifurcation the cosine mode decays
        let g = Grid::periodic(1, 128, PI).unwrap();
        let seed = sample_field(|x| 0.5 * (2.0 * x[0]).cos(), &g).unwrap();
        let params = SolveParams {
            pseudo_time: Some(1.0),
            ..SolveParams::default()
        };
        let out = solve_newton(&lap, &src, &SOperator::Identity, &seed, &params).unwrap();
        assert!(out.converged);
        assert!(out.field.max() - out.field.min() < 1e-8);
    }

    #[test]
    fn tanh_with_clamped_boundary() {
        let src = SourceModel::reaction(ScalarFn::allen_cahn());
        // exact boundary data plus an interior bump; the translation mode of
        // the front makes long intervals numerically singular
        let g = Grid::interval(-3.0, 3.0, 64).unwrap();
        let last = g.coord(63)[0];
        let seed = sample_field(
            |x| (x[0] / std::f64::consts::SQRT_2).tanh() + 0.05 * (PI * (x[0] + 3.0) / (last + 3.0)).sin(),
            &g,
        )
        .unwrap();
        let out = solve_newton(&PhiModel::laplacian(), &src, &SOperator::Identity, &seed, &SolveParams::default()).unwrap();
        assert!(out.converged, "{:?} {:?}", out.history, out.warnings);
        let exact = analytic::tanh_heteroclinic(&g).unwrap();
        let err = out
            .field
            .values()
            .iter()
            .zip(exact.field.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let h = g.spacing(0);
        assert!(err < 5.0 * h * h, "{err}");
    }

    #[test]
    fn rejects_bad_params() {
        let src = SourceModel::reaction(ScalarFn::allen_cahn());
        let u = ScalarField::constant(Grid::periodic(1, 8, 1.0).unwrap(), 0.0).unwrap();
        let params = SolveParams {
            damping: 0.0,
            ..SolveParams::default()
        };
        assert!(solve_newton(&PhiModel::laplacian(), &src, &SOperator::Identity, &u, &params).is_err());
    }
}
