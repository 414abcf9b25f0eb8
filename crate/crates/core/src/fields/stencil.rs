//! Second-order finite-difference operators.

use rayon::prelude::*;

use super::{Grid, MatrixField, ScalarField, VectorField};
use crate::error::Result;
use crate::phi::PhiModel;
use crate::small::{SmallMatrix, MAX_DIM};

/// Floor applied to `|∇u|²` on faces when `Φ'` is singular at zero.
pub const EPS_REG: f64 = 1e-12;

/// First derivative along `axis`: central differences, one-sided
/// second-order differences at clamped boundary nodes.
pub fn derivative_along(values: &[f64], grid: &Grid, axis: usize) -> Vec<f64> {
    let h = grid.spacing(axis);
    (0..values.len())
        .into_par_iter()
        .map(|i| match (grid.neighbor(i, axis, -1), grid.neighbor(i, axis, 1)) {
            (Some(m), Some(p)) => (values[p] - values[m]) / (2.0 * h),
            (None, Some(p)) => {
                let pp = grid.neighbor(p, axis, 1).expect("axis has at least 8 nodes");
                (-3.0 * values[i] + 4.0 * values[p] - values[pp]) / (2.0 * h)
            }
            (Some(m), None) => {
                let mm = grid.neighbor(m, axis, -1).expect("axis has at least 8 nodes");
                (3.0 * values[i] - 4.0 * values[m] + values[mm]) / (2.0 * h)
            }
            (None, None) => unreachable!("axis has at least 8 nodes"),
        })
        .collect()
}

fn second_derivative_along(values: &[f64], grid: &Grid, axis: usize) -> Vec<f64> {
    let h2 = grid.spacing(axis).powi(2);
    let step = |i: usize, o: isize| grid.neighbor(i, axis, o).expect("axis has at least 8 nodes");
    (0..values.len())
        .into_par_iter()
        .map(|i| match (grid.neighbor(i, axis, -1), grid.neighbor(i, axis, 1)) {
            (Some(m), Some(p)) => (values[p] - 2.0 * values[i] + values[m]) / h2,
            (None, _) => {
                let (a, b, c) = (step(i, 1), step(i, 2), step(i, 3));
                (2.0 * values[i] - 5.0 * values[a] + 4.0 * values[b] - values[c]) / h2
            }
            (_, None) => {
                let (a, b, c) = (step(i, -1), step(i, -2), step(i, -3));
                (2.0 * values[i] - 5.0 * values[a] + 4.0 * values[b] - values[c]) / h2
            }
        })
        .collect()
}

fn gradient_components(values: &[f64], grid: &Grid) -> Vec<Vec<f64>> {
    (0..grid.dim()).map(|axis| derivative_along(values, grid, axis)).collect()
}

pub fn gradient_of(field: &ScalarField) -> VectorField {
    let grid = field.grid();
    let comps = gradient_components(field.values(), grid);
    let values = (0..field.len())
        .map(|i| {
            let mut v = [0.0; MAX_DIM];
            for (axis, c) in comps.iter().enumerate() {
                v[axis] = c[i];
            }
            v
        })
        .collect();
    VectorField::new(grid.clone(), values).expect("shape follows the grid")
}

/// Hessian: three-point second differences on the diagonal, symmetrized
/// derivative of the gradient off the diagonal.
pub fn hessian_of(field: &ScalarField) -> MatrixField {
    let grid = field.grid();
    let dim = grid.dim();
    let grads = gradient_components(field.values(), grid);
    let diag: Vec<Vec<f64>> = (0..dim)
        .map(|axis| second_derivative_along(field.values(), grid, axis))
        .collect();
    // mixed[i][j] = ∂_j(∂_i u)
    let mut mixed = vec![vec![Vec::new(); dim]; dim];
    for (i, row) in mixed.iter_mut().enumerate() {
        for (j, slot) in row.iter_mut().enumerate() {
            if i != j {
                *slot = derivative_along(&grads[i], grid, j);
            }
        }
    }
    let values = (0..field.len())
        .map(|n| {
            SmallMatrix::from_fn(dim, |i, j| {
                if i == j {
                    diag[i][n]
                } else {
                    0.5 * (mixed[i][j][n] + mixed[j][i][n])
                }
            })
        })
        .collect();
    MatrixField::new(grid.clone(), values).expect("symmetric by construction")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluxOptions {
    /// Floor for `|∇u|²` on faces; `None` evaluates `Φ'` as is.
    pub regularize: Option<f64>,
}

impl FluxOptions {
    /// Regularizes exactly when `Φ'` is singular at zero.
    pub fn for_model(model: &PhiModel) -> Self {
        FluxOptions {
            regularize: model.singular_at_zero().then_some(EPS_REG),
        }
    }
}

/// `div(Φ'(|∇u|²)∇u)` in conservative form: fluxes live on the faces between
/// neighbours, with the normal derivative taken across the face and the
/// tangential ones averaged from the two adjacent nodes. Clamped boundary
/// nodes get 0.
pub fn flux_divergence(model: &PhiModel, field: &ScalarField) -> Result<ScalarField> {
    flux_divergence_with(model, field, FluxOptions::for_model(model))
}

pub fn flux_divergence_with(model: &PhiModel, field: &ScalarField, opts: FluxOptions) -> Result<ScalarField> {
    let grid = field.grid();
    let u = field.values();
    let dim = grid.dim();
    let grads = gradient_components(u, grid);
    let mut out = vec![0.0; u.len()];
    for k in 0..dim {
        let h = grid.spacing(k);
        // flux through the face between node i and its +1 neighbour on axis k
        let flux: Vec<f64> = (0..u.len())
            .into_par_iter()
            .map(|i| -> Result<f64> {
                let Some(p) = grid.neighbor(i, k, 1) else {
                    return Ok(0.0);
                };
                let normal = (u[p] - u[i]) / h;
                let mut r = normal * normal;
                for (l, g) in grads.iter().enumerate() {
                    if l != k {
                        let t = 0.5 * (g[i] + g[p]);
                        r += t * t;
                    }
                }
                if let Some(floor) = opts.regularize {
                    r = r.max(floor);
                }
                Ok(model.phi1(r)? * normal)
            })
            .collect::<Result<_>>()?;
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            if let Some(m) = grid.neighbor(i, k, -1) {
                *o += (flux[i] - flux[m]) / h;
            }
        });
    }
    if !grid.is_periodic() {
        for (i, o) in out.iter_mut().enumerate() {
            if grid.is_boundary(i) {
                *o = 0.0;
            }
        }
    }
    ScalarField::new(grid.clone(), out)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{PI, SQRT_2};

    use super::*;
    use crate::fields::{sample_field, Topology};

    fn max_err(a: &[f64], b: impl Fn(usize) -> f64) -> f64 {
        a.iter().enumerate().fold(0.0, |m, (i, v)| m.max((v - b(i)).abs()))
    }

    #[test]
    fn gradient_examples() {
        let g = Grid::periodic(2, 16, 1.0).unwrap();
        let c = ScalarField::constant(g, 2.5).unwrap();
        assert_eq!(gradient_of(&c).max_norm(), 0.0);

        let n = 256;
        let g = Grid::periodic(1, n, 2.0 * PI).unwrap();
        let u = sample_field(|x| x[0].sin(), &g).unwrap();
        let du = gradient_of(&u).component(0);
        let h = 2.0 * PI / n as f64;
        assert!(max_err(&du, |i| g.coord(i)[0].cos()) <= h * h);

        let g = Grid::interval(-20.0, 20.0, 512).unwrap();
        let h = g.spacing(0);
        let u = sample_field(|x| (x[0] / SQRT_2).tanh(), &g).unwrap();
        let du = gradient_of(&u).component(0);
        let exact = |i: usize| {
            let s = 1.0 / (g.coord(i)[0] / SQRT_2).cosh();
            s * s / SQRT_2
        };
        let interior = (1..511).fold(0.0f64, |m, i| m.max((du[i] - exact(i)).abs()));
        assert!(interior <= 5.0 * h * h, "{interior}");
    }

    #[test]
    fn gradient_exact_for_affine_clamped() {
        let g = Grid::new(&[9, 11], &[1.0, 2.0], &[-0.5, 0.3], Topology::Clamped).unwrap();
        let u = sample_field(|x| 3.0 * x[0] - 2.0 * x[1] + 1.0, &g).unwrap();
        for v in gradient_of(&u).values() {
            assert!((v[0] - 3.0).abs() < 1e-12 && (v[1] + 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hessian_examples() {
        let g = Grid::periodic(2, 16, 1.0).unwrap();
        let c = ScalarField::constant(g, 1.0).unwrap();
        assert!(hessian_of(&c).values().iter().all(|m| *m == SmallMatrix::zeros(2)));

        let g = Grid::interval(-1.0, 2.0, 16).unwrap();
        let u = sample_field(|x| x[0] * x[0], &g).unwrap();
        for m in hessian_of(&u).values() {
            assert!((m.get(0, 0) - 2.0).abs() < 1e-10);
        }

        let n = 64;
        let g = Grid::periodic(2, n, 2.0 * PI).unwrap();
        let u = sample_field(|x| x[0].sin() * x[1].sin(), &g).unwrap();
        let h = g.spacing(0);
        let hess = hessian_of(&u);
        let err = (0..g.len()).fold(0.0f64, |m, i| {
            let x = g.coord(i);
            m.max((hess.get(i).get(0, 1) - x[0].cos() * x[1].cos()).abs())
        });
        assert!(err < h * h, "{err}");
    }

    #[test]
    fn laplacian_flux() {
        let n = 128;
        let g = Grid::periodic(1, n, 2.0 * PI).unwrap();
        let u = sample_field(|x| x[0].sin(), &g).unwrap();
        let d = flux_divergence(&PhiModel::laplacian(), &u).unwrap();
        let h = g.spacing(0);
        assert!(max_err(d.values(), |i| -g.coord(i)[0].sin()) < h * h);
    }

    #[test]
    fn affine_field_has_constant_flux() {
        let p4 = PhiModel::p_laplacian(4.0).unwrap();
        let g = Grid::interval(0.0, 1.0, 16).unwrap();
        let u = sample_field(|x| x[0], &g).unwrap();
        let d = flux_divergence(&p4, &u).unwrap();
        assert!(d.values().iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn p4_flux_matches_symbolic() {
        // (u'^2 u')' = 3 cos²x · (−sin x)
        let p4 = PhiModel::p_laplacian(4.0).unwrap();
        let mut errs = Vec::new();
        for n in [64, 128] {
            let g = Grid::periodic(1, n, 2.0 * PI).unwrap();
            let u = sample_field(|x| x[0].sin(), &g).unwrap();
            let d = flux_divergence(&p4, &u).unwrap();
            errs.push(max_err(d.values(), |i| {
                let x = g.coord(i)[0];
                -3.0 * x.cos().powi(2) * x.sin()
            }));
        }
        assert!(errs[0] / errs[1] >= 3.5, "{errs:?}");
    }

    #[test]
    fn periodic_conservation() {
        let g = Grid::periodic(2, 32, 5.0).unwrap();
        let u = sample_field(|x| (x[0] * 1.3).sin() + (x[1] * 2.5).cos() * 0.4, &g).unwrap();
        let model = PhiModel::from_triples(&[(1.0, 0.0, 1.5), (0.5, 0.2, 3.0)]).unwrap();
        let d = flux_divergence(&model, &u).unwrap();
        let total: f64 = d.values().iter().sum();
        assert!(total.abs() <= 1e-10 * g.len() as f64);
    }
}
