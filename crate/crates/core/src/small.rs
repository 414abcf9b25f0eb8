//! Fixed-capacity vectors and matrices for dimensions 1 to 3.

use std::ops::Index;

/// Largest spatial dimension supported by the crate.
pub const MAX_DIM: usize = 3;

pub type Vec3 = [f64; MAX_DIM];

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Copies a slice of length at most 3 into a zero-padded array.
pub fn pad(v: &[f64]) -> Vec3 {
    let mut out = [0.0; MAX_DIM];
    out[..v.len()].copy_from_slice(v);
    out
}

/// A dense `dim × dim` matrix stored in a 3×3 array.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmallMatrix {
    dim: usize,
    entries: [[f64; MAX_DIM]; MAX_DIM],
}

impl SmallMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} not in 1..=3");
        SmallMatrix {
            dim,
            entries: [[0.0; MAX_DIM]; MAX_DIM],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.entries[i][j] = f(i, j);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.entries[i][j] = value;
    }

    /// `Σ_ij m_ij ξ_i ξ_j`.
    pub fn quadratic_form(&self, xi: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc += self.entries[i][j] * xi[i] * xi[j];
            }
        }
        acc
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec3 {
        let mut out = [0.0; MAX_DIM];
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = (0..self.dim).map(|j| self.entries[i][j] * v[j]).sum();
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::from_fn(self.dim, |i, j| self.entries[i][j] * s)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| self.entries[i][j] == self.entries[j][i]))
    }

    pub fn max_abs_diff(&self, other: &SmallMatrix) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                worst = worst.max((self.entries[i][j] - other.entries[i][j]).abs());
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for SmallMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.entries[i][j]
    }
}
