//! The P-function `P = Γ(|∇u|²) − 2F(u)` and the quantities around it: the
//! potential gauge `F`, the drift `B`, the remainder `ℛ`, the residual of the
//! differential inequality satisfied by `P`, rigidity at degenerate zeros of
//! `F`, and the `|x|^β` sharpness example.

mod counterexample;
mod remainder;
mod rigidity;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{gradient_of, MaskedField, ScalarField};
use crate::phi::PhiModel;
use crate::small::{norm_sq, Vec3};
use crate::sources::{ScalarFn, SourceModel};

pub use counterexample::{counterexample_suite, CounterexampleReport};
pub use remainder::{
    drift_at, drift_field, lemma_residual, remainder_at, remainder_field, remainder_lower_bound_check, LemmaReport,
    LowerBoundReport,
};
pub use rigidity::{p_hat, rigidity_check, RigidityInput, RigidityOutcome, RigidityVerdict, Z116_RADII};

/// Clamped-grid nodes closer than this many cells to the boundary are
/// excluded from every P-function check.
pub const BOUNDARY_MARGIN: usize = 3;

/// Number of log-spaced points used by [`gamma_sqrt_bound`].
pub const GAMMA_BOUND_POINTS: usize = 10_000;

/// The shifted potential `F = F₀ − c_u` with `c_u = min_x F₀(u(x))` over the
/// grid nodes of the field it was built on.
#[derive(Clone, Debug)]
pub struct Gauge {
    f: ScalarFn,
    c_u: f64,
    fingerprint: u64,
    range: (f64, f64),
}

impl Gauge {
    pub fn c_u(&self) -> f64 {
        self.c_u
    }

    /// `F(r) = F₀(r) − c_u`.
    pub fn eval(&self, r: f64) -> Result<f64> {
        Ok(self.f.primitive(r)? - self.c_u)
    }

    /// `F'(r) = f(r)`.
    pub fn derivative(&self, r: f64) -> f64 {
        self.f.eval(r)
    }

    /// `F''(r) = f'(r)`.
    pub fn second_derivative(&self, r: f64) -> f64 {
        self.f.deriv(r)
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Range `[min u, max u]` of the field the gauge was built on.
    pub fn range(&self) -> (f64, f64) {
        self.range
    }

    pub fn matches(&self, field: &ScalarField) -> bool {
        self.fingerprint == field.fingerprint()
    }
}

pub fn build_gauge(src: &SourceModel, field: &ScalarField) -> Result<Gauge> {
    let f0: Vec<f64> = field
        .values()
        .par_iter()
        .map(|&u| src.primitive(u))
        .collect::<Result<_>>()?;
    let c_u = f0.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Gauge {
        f: src.f.clone(),
        c_u,
        fingerprint: field.fingerprint(),
        range: (field.min(), field.max()),
    })
}

/// How `∇u` is obtained for [`p_field`].
pub enum DerivativeMode<'a> {
    /// Exact gradient at a point.
    Analytic(&'a (dyn Fn(&[f64]) -> Vec3 + Sync)),
    FiniteDifference,
}

#[derive(Clone, Debug)]
pub struct PReport {
    pub values: MaskedField,
    pub max_p: f64,
    pub argmax: Option<usize>,
    /// Admissible nodes with `P > tol`.
    pub violation_count: usize,
    pub tol: f64,
    /// False when the gauge was built on a different field.
    pub gauge_matches: bool,
}

impl PReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }
}

/// Nodes used by P-function checks: all nodes on periodic grids, nodes at
/// least `BOUNDARY_MARGIN` cells inside on clamped grids.
pub fn admissible(field: &ScalarField, idx: usize) -> bool {
    field.grid().boundary_distance(idx) >= BOUNDARY_MARGIN
}

/// Default threshold for the set `{|∇u| > δ}`.
pub fn default_delta(max_grad: f64) -> f64 {
    1e-6f64.max(1e-3 * max_grad)
}

/// Nodal gradients in the requested mode.
fn gradients(field: &ScalarField, mode: &DerivativeMode<'_>) -> Vec<Vec3> {
    match mode {
        DerivativeMode::FiniteDifference => gradient_of(field).values().to_vec(),
        DerivativeMode::Analytic(grad) => {
            let grid = field.grid();
            (0..field.len())
                .into_par_iter()
                .map(|i| {
                    let x = grid.coord(i);
                    let mut g = grad(&x[..grid.dim()]);
                    g[grid.dim()..].iter_mut().for_each(|v| *v = 0.0);
                    g
                })
                .collect()
        }
    }
}

/// `P(x) = Γ(|∇u|²) − 2F(u)` at every admissible node, flagging nodes with
/// `P > tol`.
pub fn p_field(model: &PhiModel, gauge: &Gauge, field: &ScalarField, mode: DerivativeMode<'_>, tol: f64) -> Result<PReport> {
    let grads = gradients(field, &mode);
    let u = field.values();
    let values: Vec<f64> = (0..field.len())
        .into_par_iter()
        .map(|i| {
            if !admissible(field, i) {
                return Ok(f64::NAN);
            }
            let r = norm_sq(&grads[i]);
            Ok(model.gamma(r)? - 2.0 * gauge.eval(u[i])?)
        })
        .collect::<Result<_>>()?;
    let values = MaskedField::new(field.grid().clone(), values)?;
    let (argmax, max_p) = match values.argmax() {
        Some((i, v)) => (Some(i), v),
        None => (None, f64::NEG_INFINITY),
    };
    let violation_count = values.iter_active().filter(|(_, v)| *v > tol).count();
    Ok(PReport {
        max_p,
        argmax,
        violation_count,
        tol,
        gauge_matches: gauge.matches(field),
        values,
    })
}

/// Smallest `C` with `Γ(r) ≤ C√r` on `GAMMA_BOUND_POINTS` log-spaced points
/// of `[1e-8·M², M²]`.
pub fn gamma_sqrt_bound(model: &PhiModel, m: f64) -> Result<f64> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::domain("gamma bound", format!("M = {m} must be > 0")));
    }
    let hi = m * m;
    let lo = 1e-8 * hi;
    let span = (hi / lo).ln();
    (0..GAMMA_BOUND_POINTS)
        .map(|k| {
            let r = if k + 1 == GAMMA_BOUND_POINTS {
                hi
            } else {
                lo * (span * k as f64 / (GAMMA_BOUND_POINTS - 1) as f64).exp()
            };
            Ok(model.gamma(r)? / r.sqrt())
        })
        .try_fold(0.0f64, |acc, v: Result<f64>| Ok(acc.max(v?)))
}
