//! Numerical toolkit for pointwise gradient bounds of quasilinear elliptic
//! equations `div(Φ'(|∇u|²)∇u) = f(u) + g(∇u, Su)`.

// `!(x > 0.0)` is used on purpose throughout so that NaN fails the guard.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ellipticity;
pub mod error;
pub mod fields;
pub mod phi;
pub mod pfunc;
pub mod quad;
pub mod small;
pub mod solver;
pub mod sources;

pub use error::{Error, Result};
pub use phi::{PhiModel, PhiTerm};
