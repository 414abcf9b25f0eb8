//! Scalar, vector and matrix fields on rectangular grids in dimension 1 to 3.
//!
//! Storage is a flat row-major array (axis 0 slowest). Periodic axes wrap
//! indices modulo `N`; clamped axes treat the first and last node as
//! Dirichlet data.

mod io;
mod stencil;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::small::{SmallMatrix, Vec3, MAX_DIM};

pub use io::{read_field, write_csv, write_field};
pub use stencil::{
    derivative_along, flux_divergence, flux_divergence_with, gradient_of, hessian_of, FluxOptions, EPS_REG,
};

/// Smallest number of nodes per axis.
pub const MIN_POINTS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Topology {
    Periodic,
    Clamped,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    points: [usize; MAX_DIM],
    extents: [f64; MAX_DIM],
    origin: [f64; MAX_DIM],
    topology: Topology,
}

impl Grid {
    /// Grid with node `j` on axis `i` at `origin_i + j·L_i/N_i`.
    pub fn new(points: &[usize], extents: &[f64], origin: &[f64], topology: Topology) -> Result<Self> {
        let dim = points.len();
        if !(1..=MAX_DIM).contains(&dim) || extents.len() != dim || origin.len() != dim {
            return Err(Error::Shape(format!(
                "grid needs 1..=3 axes with matching lengths (got {}, {}, {})",
                points.len(),
                extents.len(),
                origin.len()
            )));
        }
        let mut grid = Grid {
            dim,
            points: [1; MAX_DIM],
            extents: [1.0; MAX_DIM],
            origin: [0.0; MAX_DIM],
            topology,
        };
        for i in 0..dim {
            if points[i] < MIN_POINTS {
                return Err(Error::Shape(format!("axis {i} has {} points, need >= {MIN_POINTS}", points[i])));
            }
            if !(extents[i] > 0.0 && extents[i].is_finite()) {
                return Err(Error::Shape(format!("axis {i} has length {}", extents[i])));
            }
            if !origin[i].is_finite() {
                return Err(Error::Shape(format!("axis {i} has origin {}", origin[i])));
            }
            grid.points[i] = points[i];
            grid.extents[i] = extents[i];
            grid.origin[i] = origin[i];
        }
        Ok(grid)
    }

    /// Periodic grid on `[0, L)ⁿ` with `N` points per axis.
    pub fn periodic(dim: usize, n: usize, length: f64) -> Result<Self> {
        Grid::new(&vec![n; dim], &vec![length; dim], &vec![0.0; dim], Topology::Periodic)
    }

    /// Clamped 1D grid starting at `a` with `N` points of spacing `(b − a)/N`.
    pub fn interval(a: f64, b: f64, n: usize) -> Result<Self> {
        Grid::new(&[n], &[b - a], &[a], Topology::Clamped)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[usize] {
        &self.points[..self.dim]
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents[..self.dim]
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.dim]
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn is_periodic(&self) -> bool {
        self.topology == Topology::Periodic
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extents[axis] / self.points[axis] as f64
    }

    /// Largest spacing over all axes.
    pub fn max_spacing(&self) -> f64 {
        (0..self.dim).map(|i| self.spacing(i)).fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.points[..self.dim].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.points[axis + 1..self.dim].iter().product()
    }

    pub fn unravel(&self, mut idx: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        for axis in (0..self.dim).rev() {
            out[axis] = idx % self.points[axis];
            idx /= self.points[axis];
        }
        out
    }

    pub fn ravel(&self, multi: &[usize]) -> usize {
        (0..self.dim).fold(0, |acc, axis| acc * self.points[axis] + multi[axis])
    }

    pub fn coord(&self, idx: usize) -> Vec3 {
        let m = self.unravel(idx);
        let mut x = [0.0; MAX_DIM];
        for axis in 0..self.dim {
            x[axis] = self.origin[axis] + m[axis] as f64 * self.spacing(axis);
        }
        x
    }

    /// Index of the node `offset` steps along `axis`, wrapping on periodic
    /// grids and `None` beyond a clamped boundary.
    pub fn neighbor(&self, idx: usize, axis: usize, offset: isize) -> Option<usize> {
        let n = self.points[axis] as isize;
        let j = ((idx / self.stride(axis)) % self.points[axis]) as isize;
        let target = j + offset;
        let wrapped = match self.topology {
            Topology::Periodic => target.rem_euclid(n),
            Topology::Clamped if (0..n).contains(&target) => target,
            Topology::Clamped => return None,
        };
        Some((idx as isize + (wrapped - j) * self.stride(axis) as isize) as usize)
    }

    /// Number of nodes between `idx` and the nearest clamped boundary node
    /// (`usize::MAX` on periodic grids).
    pub fn boundary_distance(&self, idx: usize) -> usize {
        if self.is_periodic() {
            return usize::MAX;
        }
        let m = self.unravel(idx);
        (0..self.dim)
            .map(|axis| m[axis].min(self.points[axis] - 1 - m[axis]))
            .min()
            .unwrap_or(0)
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        self.boundary_distance(idx) == 0
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self == other
    }
}

/// A grid function with finite values.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!("{} values for a grid of {} nodes", values.len(), grid.len())));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "field value", index });
        }
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Result<Self> {
        let n = grid.len();
        ScalarField::new(grid, vec![value; n])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// A cheap content hash used to tie derived objects to this field.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over the raw bits
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.values {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x100_0000_01b3);
            }
        }
        h ^ self.values.len() as u64
    }
}

/// A grid function that may be undefined at some nodes (stored as NaN).
#[derive(Clone, Debug)]
pub struct MaskedField {
    grid: Grid,
    values: Vec<f64>,
}

impl MaskedField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!("{} values for a grid of {} nodes", values.len(), grid.len())));
        }
        Ok(MaskedField { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Raw values with NaN at masked nodes.
    pub fn raw(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, idx: usize) -> Option<f64> {
        let v = self.values[idx];
        (!v.is_nan()).then_some(v)
    }

    pub fn active_count(&self) -> usize {
        self.values.iter().filter(|v| !v.is_nan()).count()
    }

    /// Smallest defined value and its node.
    pub fn argmin(&self) -> Option<(usize, f64)> {
        self.iter_active().fold(None, |best, (i, v)| match best {
            Some((_, b)) if b <= v => best,
            _ => Some((i, v)),
        })
    }

    /// Largest defined value and its node.
    pub fn argmax(&self) -> Option<(usize, f64)> {
        self.iter_active().fold(None, |best, (i, v)| match best {
            Some((_, b)) if b >= v => best,
            _ => Some((i, v)),
        })
    }

    pub fn iter_active(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().enumerate().filter(|(_, v)| !v.is_nan()).map(|(i, v)| (i, *v))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: Grid,
    values: Vec<Vec3>,
}

impl VectorField {
    pub fn new(grid: Grid, values: Vec<Vec3>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!("{} vectors for a grid of {} nodes", values.len(), grid.len())));
        }
        Ok(VectorField { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Vec3] {
        &self.values
    }

    pub fn get(&self, idx: usize) -> &[f64] {
        &self.values[idx][..self.grid.dim()]
    }

    /// Component `axis` as a plain array.
    pub fn component(&self, axis: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[axis]).collect()
    }

    pub fn max_norm(&self) -> f64 {
        self.values
            .iter()
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixField {
    grid: Grid,
    values: Vec<SmallMatrix>,
}

impl MatrixField {
    pub fn new(grid: Grid, values: Vec<SmallMatrix>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!("{} matrices for a grid of {} nodes", values.len(), grid.len())));
        }
        if let Some(i) = values.iter().position(|m| m.dim() != grid.dim() || !m.is_symmetric()) {
            return Err(Error::Shape(format!("matrix at node {i} is not a symmetric {0}x{0} matrix", grid.dim())));
        }
        Ok(MatrixField { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[SmallMatrix] {
        &self.values
    }

    pub fn get(&self, idx: usize) -> &SmallMatrix {
        &self.values[idx]
    }
}

/// Evaluates `expr` at every node `x_j = origin + j·h`.
pub fn sample_field<F>(expr: F, grid: &Grid) -> Result<ScalarField>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = grid.dim();
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| expr(&grid.coord(i)[..dim]))
        .collect();
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "sampled expression",
            index,
        });
    }
    ScalarField::new(grid.clone(), values)
}
