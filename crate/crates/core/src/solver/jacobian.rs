//! Sparsity pattern, distance-2 coloring and Jacobian assembly for the
//! discrete residual. Row `i` of the residual only reads nodes within
//! Chebyshev distance 1 of `i`, so columns at Chebyshev distance ≥ 3 never
//! share a row and can be perturbed together.

use rayon::prelude::*;

use super::residual_values;
use super::sparse::CsrMatrix;
use crate::error::Result;
use crate::fields::{derivative_along, FluxOptions, Grid, ScalarField};
use crate::phi::PhiModel;
use crate::sources::{SOperator, SourceModel};

/// Nodes within Chebyshev distance `radius` of `idx`, wrapping on periodic
/// grids and clipping on clamped ones. Includes `idx`.
pub fn neighborhood(grid: &Grid, idx: usize, radius: usize) -> Vec<usize> {
    let dim = grid.dim();
    let base = grid.unravel(idx);
    let width = 2 * radius + 1;
    let total = width.pow(dim as u32);
    let mut out = Vec::with_capacity(total);
    'offsets: for code in 0..total {
        let mut c = code;
        let mut multi = [0usize; 3];
        for (axis, m) in multi.iter_mut().enumerate().take(dim) {
            let off = (c % width) as isize - radius as isize;
            c /= width;
            let n = grid.points()[axis] as isize;
            let mut v = base[axis] as isize + off;
            if grid.is_periodic() {
                v = v.rem_euclid(n);
            } else if v < 0 || v >= n {
                continue 'offsets;
            }
            *m = v as usize;
        }
        out.push(grid.ravel(&multi[..dim]));
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Greedy coloring in which nodes at Chebyshev distance ≤ 2 get different
/// colors. Returns the color of every node and the number of colors.
pub fn distance2_coloring(grid: &Grid) -> (Vec<usize>, usize) {
    let len = grid.len();
    let mut color = vec![usize::MAX; len];
    let mut used = Vec::new();
    let mut ncolors = 0;
    for i in 0..len {
        used.clear();
        for j in neighborhood(grid, i, 2) {
            if color[j] != usize::MAX {
                used.push(color[j]);
            }
        }
        let c = (0..).find(|c| !used.contains(c)).expect("unbounded range");
        color[i] = c;
        ncolors = ncolors.max(c + 1);
    }
    (color, ncolors)
}

/// Rows fixed by the boundary condition (clamped boundary nodes).
pub fn fixed_rows(grid: &Grid) -> Vec<bool> {
    (0..grid.len())
        .map(|i| !grid.is_periodic() && grid.is_boundary(i))
        .collect()
}

pub fn pattern(grid: &Grid) -> CsrMatrix {
    let fixed = fixed_rows(grid);
    let rows = (0..grid.len())
        .map(|i| if fixed[i] { vec![i] } else { neighborhood(grid, i, 1) })
        .collect();
    CsrMatrix::with_pattern(rows)
}

/// Precomputed pattern and coloring for one grid.
pub struct ColoredJacobian {
    grid: Grid,
    colors: Vec<Vec<usize>>,
    template: CsrMatrix,
    fixed: Vec<bool>,
}

impl ColoredJacobian {
    pub fn new(grid: &Grid) -> Self {
        let (color, n) = distance2_coloring(grid);
        let fixed = fixed_rows(grid);
        let mut colors = vec![Vec::new(); n];
        for (i, c) in color.into_iter().enumerate() {
            if !fixed[i] {
                colors[c].push(i);
            }
        }
        ColoredJacobian {
            grid: grid.clone(),
            colors,
            template: pattern(grid),
            fixed,
        }
    }

    pub fn color_count(&self) -> usize {
        self.colors.len()
    }

    /// Central-difference Jacobian of the residual at `u`.
    pub fn assemble(&self, model: &PhiModel, src: &SourceModel, s: &SOperator, u: &[f64]) -> Result<CsrMatrix> {
        let mut jac = self.template.clone();
        let step = |v: f64| f64::EPSILON.cbrt() * v.abs().max(1.0);
        let mut plus = u.to_vec();
        let mut minus = u.to_vec();
        for cols in &self.colors {
            for &j in cols {
                plus[j] = u[j] + step(u[j]);
                minus[j] = u[j] - step(u[j]);
            }
            let rp = residual_values(model, src, s, &self.grid, &plus)?;
            let rm = residual_values(model, src, s, &self.grid, &minus)?;
            for &j in cols {
                let h = plus[j] - minus[j];
                for i in neighborhood(&self.grid, j, 1) {
                    if !self.fixed[i] {
                        jac.set(i, j, (rp[i] - rm[i]) / h);
                    }
                }
                plus[j] = u[j];
                minus[j] = u[j];
            }
        }
        for (i, &f) in self.fixed.iter().enumerate() {
            if f {
                jac.identity_row(i);
            }
        }
        Ok(jac)
    }
}

/// Frozen-coefficient linearization: `δ ↦ div(Φ'(|∇u|²)∇δ) − f'(u)δ`, with
/// `Φ'` evaluated on the faces of the current iterate. The coupling term is
/// not linearized.
pub fn picard_matrix(model: &PhiModel, src: &SourceModel, grid: &Grid, u: &[f64]) -> Result<CsrMatrix> {
    let mut jac = pattern(grid);
    let fixed = fixed_rows(grid);
    let opts = FluxOptions::for_model(model);
    let dim = grid.dim();
    let grads: Vec<Vec<f64>> = (0..dim).map(|axis| derivative_along(u, grid, axis)).collect();
    for k in 0..dim {
        let h = grid.spacing(k);
        let kappa: Vec<f64> = (0..u.len())
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
                model.phi1(r)
            })
            .collect::<Result<_>>()?;
        for i in 0..u.len() {
            if fixed[i] {
                continue;
            }
            let h2 = h * h;
            if let Some(p) = grid.neighbor(i, k, 1) {
                jac.add(i, p, kappa[i] / h2);
                jac.add(i, i, -kappa[i] / h2);
            }
            if let Some(m) = grid.neighbor(i, k, -1) {
                jac.add(i, m, kappa[m] / h2);
                jac.add(i, i, -kappa[m] / h2);
            }
        }
    }
    for (i, &f) in fixed.iter().enumerate() {
        if f {
            jac.identity_row(i);
        } else {
            jac.add(i, i, -src.f.deriv(u[i]));
        }
    }
    Ok(jac)
}

/// Residual Jacobian by plain (uncolored) central differences; for tests.
pub fn dense_fd_jacobian(model: &PhiModel, src: &SourceModel, s: &SOperator, field: &ScalarField) -> Result<Vec<Vec<f64>>> {
    let grid = field.grid();
    let u = field.values();
    let fixed = fixed_rows(grid);
    let n = u.len();
    let mut out = vec![vec![0.0; n]; n];
    for j in 0..n {
        if fixed[j] {
            out[j][j] = 1.0;
            continue;
        }
        let h = f64::EPSILON.cbrt() * u[j].abs().max(1.0);
        let mut w = u.to_vec();
        w[j] = u[j] + h;
        let rp = residual_values(model, src, s, grid, &w)?;
        w[j] = u[j] - h;
        let rm = residual_values(model, src, s, grid, &w)?;
        for i in 0..n {
            if !fixed[i] {
                out[i][j] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::sample_field;
    use crate::sources::ScalarFn;

    #[test]
    fn coloring_is_valid() {
        for grid in [
            Grid::periodic(2, 12, 1.0).unwrap(),
            Grid::periodic(2, 13, 1.0).unwrap(),
            Grid::interval(0.0, 1.0, 20).unwrap(),
        ] {
            let (color, n) = distance2_coloring(&grid);
            for i in 0..grid.len() {
                for j in neighborhood(&grid, i, 2) {
                    if j != i {
                        assert_ne!(color[i], color[j]);
                    }
                }
            }
            assert!(n >= 3usize.pow(grid.dim() as u32));
        }
        let (_, n) = distance2_coloring(&Grid::periodic(2, 15, 1.0).unwrap());
        assert_eq!(n, 9);
    }

    #[test]
    fn colored_matches_dense() {
        let model = PhiModel::from_triples(&[(1.0, 0.0, 2.0), (0.3, 0.5, 4.0)]).unwrap();
        let src = SourceModel::reaction(ScalarFn::allen_cahn());
        for grid in [Grid::periodic(2, 9, 3.0).unwrap(), Grid::interval(-2.0, 2.0, 14).unwrap()] {
            let u = sample_field(|x| (x[0]).sin() * 0.7 + 0.1 * x.iter().sum::<f64>().cos(), &grid).unwrap();
            let cj = ColoredJacobian::new(&grid);
            let sparse = cj.assemble(&model, &src, &SOperator::Identity, u.values()).unwrap();
            let dense = dense_fd_jacobian(&model, &src, &SOperator::Identity, &u).unwrap();
            for (i, row) in dense.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    assert!((sparse.get(i, j) - v).abs() < 1e-7, "({i},{j}) {} vs {v}", sparse.get(i, j));
                }
            }
        }
    }

    #[test]
    fn picard_equals_jacobian_for_laplacian() {
        let src = SourceModel::reaction(ScalarFn::allen_cahn());
        let grid = Grid::periodic(2, 10, 2.0).unwrap();
        let u = sample_field(|x| (3.0 * x[0]).cos() * x[1].sin(), &grid).unwrap();
        let model = PhiModel::laplacian();
        let p = picard_matrix(&model, &src, &grid, u.values()).unwrap();
        let dense = dense_fd_jacobian(&model, &src, &SOperator::Identity, &u).unwrap();
        for (i, row) in dense.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((p.get(i, j) - v).abs() < 1e-6);
            }
        }
    }
}
