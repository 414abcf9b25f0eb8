//! The diffusion potential `Φ` and the quantities derived from it.
//!
//! The operator is `div(Φ'(|∇u|²)∇u)`. Besides `Φ` and its first three
//! derivatives this module provides
//!
//! * the radial ellipticity `Λ(r) = 2rΦ''(r) + Φ'(r)`,
//! * `Γ(r) = 2rΦ'(r) − Φ(r)`, the gradient part of the P-function, and its
//!   inverse `Ψ` (computed by bisection, `Γ' = Λ`),
//! * the coefficient matrix `a_ij(σ) = 2Φ''(|σ|²)σ_iσ_j + Φ'(|σ|²)δ_ij` and its
//!   normalization `d_ij = a_ij / Λ(|σ|²)`.
//!
//! The concrete family is a superposition of shifted powers,
//!
//! ```text
//! Φ(r) = Σ_k (2c_k/p_k) [ (b_k + r)^{p_k/2} − b_k^{p_k/2} ],
//! ```
//!
//! which covers the Laplacian (`c=1, b=0, p=2`), the p-Laplacian, (p,q)-growth
//! sums, and mean-curvature-like operators (`p = 1, b > 0`).

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::small::{norm_sq, pad, SmallMatrix, Vec3, MAX_DIM};

/// Scalar callable used by custom potentials.
pub type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Number of log-spaced points used by [`PhiModel::lambda_floor`].
pub const LAMBDA_FLOOR_POINTS: usize = 10_000;

/// Bisection iteration cap for [`PhiModel::psi_invert`].
pub const PSI_MAX_ITERS: usize = 200;

/// Default absolute tolerance for [`PhiModel::psi_invert`].
pub const PSI_DEFAULT_TOL: f64 = 1e-12;

/// One summand `(2c/p)[(b + r)^{p/2} − b^{p/2}]` of the power family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhiTerm {
    c: f64,
    b: f64,
    p: f64,
}

impl PhiTerm {
    pub fn new(c: f64, b: f64, p: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::Precondition(format!("weight c = {c} must be > 0")));
        }
        if !(b.is_finite() && b >= 0.0) {
            return Err(Error::Precondition(format!("shift b = {b} must be >= 0")));
        }
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::Precondition(format!("exponent p = {p} must be >= 1")));
        }
        Ok(PhiTerm { c, b, p })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    fn phi(&self, r: f64) -> f64 {
        let half = 0.5 * self.p;
        let scale = 2.0 * self.c / self.p;
        if self.b == 0.0 {
            scale * r.powf(half)
        } else {
            // b^{p/2}((1 + r/b)^{p/2} − 1) avoids cancellation for r << b.
            scale * self.b.powf(half) * (half * (r / self.b).ln_1p()).exp_m1()
        }
    }

    /// `(Φ', Φ'', Φ''')` of this term. Terms whose coefficient vanishes are
    /// exactly zero, so `p = 2` and `p = 4` stay finite at `r = 0`.
    fn derivatives(&self, r: f64) -> [f64; 3] {
        let base = self.b + r;
        let q = self.p - 2.0;
        [
            coef_pow(self.c, base, 0.5 * q),
            coef_pow(0.5 * self.c * q, base, 0.5 * (self.p - 4.0)),
            coef_pow(0.25 * self.c * q * (self.p - 4.0), base, 0.5 * (self.p - 6.0)),
        ]
    }

    fn lambda(&self, r: f64) -> f64 {
        if self.p == 2.0 {
            return self.c;
        }
        let bracket = (self.p - 1.0) * r + self.b;
        coef_pow(self.c * bracket, self.b + r, 0.5 * (self.p - 4.0))
    }
}

fn coef_pow(coef: f64, base: f64, exponent: f64) -> f64 {
    if coef == 0.0 {
        0.0
    } else {
        coef * base.powf(exponent)
    }
}

/// User-supplied `Φ` together with its first three derivatives.
#[derive(Clone)]
pub struct CustomPhi {
    pub phi: ScalarMap,
    pub phi1: ScalarMap,
    pub phi2: ScalarMap,
    pub phi3: ScalarMap,
}

/// `(Φ'(r), Φ''(r), Φ'''(r))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhiDerivatives {
    pub first: f64,
    pub second: f64,
    pub third: f64,
}

/// Minimum of `Λ` over the working range and where it is attained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaFloor {
    pub min: f64,
    pub at: f64,
}

impl LambdaFloor {
    pub fn is_positive(&self) -> bool {
        self.min > 0.0
    }
}

#[derive(Clone)]
pub enum PhiModel {
    /// Sum of shifted powers, sorted by nondecreasing exponent.
    Family(Vec<PhiTerm>),
    Custom(CustomPhi),
}

impl fmt::Debug for PhiModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhiModel::Family(terms) => f.debug_tuple("Family").field(terms).finish(),
            PhiModel::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl PhiModel {
    /// Builds a power family, sorting the terms by exponent.
    pub fn family(mut terms: Vec<PhiTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Precondition("a family needs at least one term".into()));
        }
        terms.sort_by(|a, b| a.p.total_cmp(&b.p));
        Ok(PhiModel::Family(terms))
    }

    /// Convenience constructor from `(c, b, p)` triples.
    pub fn from_triples(triples: &[(f64, f64, f64)]) -> Result<Self> {
        let terms = triples
            .iter()
            .map(|&(c, b, p)| PhiTerm::new(c, b, p))
            .collect::<Result<Vec<_>>>()?;
        Self::family(terms)
    }

    /// `Φ(r) = r`, the Laplacian.
    pub fn laplacian() -> Self {
        PhiModel::Family(vec![PhiTerm {
            c: 1.0,
            b: 0.0,
            p: 2.0,
        }])
    }

    /// `Φ(r) = (2/p) r^{p/2}`, the p-Laplacian.
    pub fn p_laplacian(p: f64) -> Result<Self> {
        Self::from_triples(&[(1.0, 0.0, p)])
    }

    /// A custom potential. `Φ(0)` must vanish to within `1e-12`.
    pub fn custom(phi: ScalarMap, phi1: ScalarMap, phi2: ScalarMap, phi3: ScalarMap) -> Result<Self> {
        let at_zero = phi(0.0);
        if !(at_zero.abs() <= 1e-12) {
            return Err(Error::Precondition(format!("custom Φ(0) = {at_zero:e}, expected 0")));
        }
        Ok(PhiModel::Custom(CustomPhi {
            phi,
            phi1,
            phi2,
            phi3,
        }))
    }

    pub fn terms(&self) -> Option<&[PhiTerm]> {
        match self {
            PhiModel::Family(t) => Some(t),
            PhiModel::Custom(_) => None,
        }
    }

    /// Multiplies every weight `c_k` by `factor` (family models only).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        match self {
            PhiModel::Family(terms) => Self::family(
                terms
                    .iter()
                    .map(|t| PhiTerm::new(t.c * factor, t.b, t.p))
                    .collect::<Result<Vec<_>>>()?,
            ),
            PhiModel::Custom(_) => Err(Error::Precondition("cannot rescale a custom potential".into())),
        }
    }

    /// True when `Φ'` blows up at `r = 0` (a term with `b = 0` and `p < 2`).
    pub fn singular_at_zero(&self) -> bool {
        match self {
            PhiModel::Family(terms) => terms.iter().any(|t| t.b == 0.0 && t.p < 2.0),
            PhiModel::Custom(c) => !(c.phi1)(0.0).is_finite(),
        }
    }

    pub fn phi(&self, r: f64) -> Result<f64> {
        check_nonnegative("Φ", r)?;
        let v = match self {
            PhiModel::Family(terms) => terms.iter().map(|t| t.phi(r)).sum(),
            PhiModel::Custom(c) => (c.phi)(r),
        };
        finite("Φ", r, v)
    }

    /// `Φ'(r)` alone.
    pub fn phi1(&self, r: f64) -> Result<f64> {
        check_nonnegative("Φ'", r)?;
        let v = match self {
            PhiModel::Family(terms) => terms.iter().map(|t| coef_pow(t.c, t.b + r, 0.5 * (t.p - 2.0))).sum(),
            PhiModel::Custom(c) => (c.phi1)(r),
        };
        finite("Φ'", r, v)
    }

    /// `(Φ', Φ'', Φ''')` at `r`. At `r = 0` this succeeds only where every
    /// term's formula is finite; otherwise a domain error is returned.
    pub fn derivatives(&self, r: f64) -> Result<PhiDerivatives> {
        check_nonnegative("Φ derivatives", r)?;
        let d = match self {
            PhiModel::Family(terms) => terms.iter().fold([0.0; 3], |acc, t| {
                let d = t.derivatives(r);
                [acc[0] + d[0], acc[1] + d[1], acc[2] + d[2]]
            }),
            PhiModel::Custom(c) => [(c.phi1)(r), (c.phi2)(r), (c.phi3)(r)],
        };
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(
                "Φ derivatives",
                format!("singular point r = {r:e} (derivatives {d:?})"),
            ));
        }
        Ok(PhiDerivatives {
            first: d[0],
            second: d[1],
            third: d[2],
        })
    }

    /// `Λ(r) = 2rΦ''(r) + Φ'(r)`; closed form `Σ c_k(b_k+r)^{(p_k−4)/2}[(p_k−1)r + b_k]`
    /// for the family.
    pub fn lambda(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::domain("Λ", format!("requires r > 0, got {r:e}")));
        }
        match self {
            PhiModel::Family(terms) => finite("Λ", r, terms.iter().map(|t| t.lambda(r)).sum()),
            PhiModel::Custom(_) => {
                let d = self.derivatives(r)?;
                Ok(2.0 * r * d.second + d.first)
            }
        }
    }

    /// `Γ(r) = 2rΦ'(r) − Φ(r)`, with `Γ(0) = 0`.
    pub fn gamma(&self, r: f64) -> Result<f64> {
        check_nonnegative("Γ", r)?;
        if r == 0.0 {
            return Ok(0.0);
        }
        Ok(2.0 * r * self.phi1(r)? - self.phi(r)?)
    }

    /// Minimum of `Λ` over `LAMBDA_FLOOR_POINTS` log-spaced points in
    /// `[1e-8·M², M²]`.
    pub fn lambda_floor(&self, m: f64) -> Result<LambdaFloor> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::domain("lambda floor", format!("gradient cap M = {m} must be > 0")));
        }
        let hi = m * m;
        let lo = 1e-8 * hi;
        let ratio = (hi / lo).ln();
        let mut best = LambdaFloor {
            min: f64::INFINITY,
            at: lo,
        };
        for k in 0..LAMBDA_FLOOR_POINTS {
            let r = if k + 1 == LAMBDA_FLOOR_POINTS {
                hi
            } else {
                lo * (ratio * k as f64 / (LAMBDA_FLOOR_POINTS - 1) as f64).exp()
            };
            let v = self.lambda(r)?;
            if v < best.min {
                best = LambdaFloor { min: v, at: r };
            }
        }
        Ok(best)
    }

    /// Inverse of `Γ` on `[0, r_max]` (see [`GammaInverse`]).
    pub fn psi_invert(&self, s: f64, r_max: f64, tol: f64) -> Result<f64> {
        GammaInverse::new(self, r_max)?.invert(s, tol)
    }

    /// `a_ij(σ) = 2Φ''(|σ|²)σ_iσ_j + Φ'(|σ|²)δ_ij`.
    pub fn coefficient_matrix(&self, sigma: &[f64]) -> Result<CoefficientMatrix> {
        check_dim(sigma)?;
        let r = norm_sq(sigma);
        let d = self.derivatives(r)?;
        let n = sigma.len();
        let entries = SmallMatrix::from_fn(n, |i, j| {
            let diag = if i == j { d.first } else { 0.0 };
            2.0 * d.second * (sigma[i] * sigma[j]) + diag
        });
        Ok(CoefficientMatrix {
            entries,
            sigma: pad(sigma),
        })
    }

    /// `d_ij(σ) = a_ij(σ) / Λ(|σ|²)`.
    pub fn normalized_matrix(&self, sigma: &[f64]) -> Result<SmallMatrix> {
        check_dim(sigma)?;
        let r = norm_sq(sigma);
        if !(r > 0.0) {
            return Err(Error::domain("d_ij", "requires σ ≠ 0"));
        }
        let lambda = self.lambda(r)?;
        if !(lambda > 0.0) {
            return Err(Error::Monotonicity { floor: lambda, at: r });
        }
        Ok(self.coefficient_matrix(sigma)?.matrix().scaled(1.0 / lambda))
    }

    /// Compares the supplied derivatives with central differences of the
    /// lower-order ones, step `1e-5·max(r,1)`, relative tolerance `1e-5`.
    pub fn cross_check_derivatives(&self, r: f64) -> Result<()> {
        let h = 1e-5 * r.max(1.0);
        if r - h <= 0.0 {
            return Err(Error::domain("derivative cross-check", format!("r = {r:e} too close to 0")));
        }
        let d = self.derivatives(r)?;
        let lo = self.derivatives(r - h)?;
        let hi = self.derivatives(r + h)?;
        let fd = [
            (self.phi(r + h)? - self.phi(r - h)?) / (2.0 * h),
            (hi.first - lo.first) / (2.0 * h),
            (hi.second - lo.second) / (2.0 * h),
        ];
        let exact = [d.first, d.second, d.third];
        for (order, (e, a)) in exact.iter().zip(fd).enumerate() {
            let scale = e.abs().max(a.abs()).max(1e-8);
            if (e - a).abs() > 1e-5 * scale {
                return Err(Error::Precondition(format!(
                    "derivative of order {} disagrees with finite differences at r = {r}: {e} vs {a}",
                    order + 1
                )));
            }
        }
        Ok(())
    }
}

/// Bisection inverse of `Γ`, valid once `Λ > 0` has been certified on
/// `(0, r_max]`.
pub struct GammaInverse<'a> {
    model: &'a PhiModel,
    r_max: f64,
    gamma_max: f64,
}

impl<'a> GammaInverse<'a> {
    /// Certifies `Λ > 0` on `[1e-8 r_max, r_max]` via [`PhiModel::lambda_floor`].
    pub fn new(model: &'a PhiModel, r_max: f64) -> Result<Self> {
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::domain("Ψ", format!("r_max = {r_max} must be > 0")));
        }
        let floor = model.lambda_floor(r_max.sqrt())?;
        if !floor.is_positive() {
            return Err(Error::Monotonicity {
                floor: floor.min,
                at: floor.at,
            });
        }
        Ok(GammaInverse {
            model,
            r_max,
            gamma_max: model.gamma(r_max)?,
        })
    }

    pub fn gamma_max(&self) -> f64 {
        self.gamma_max
    }

    /// Returns `r ∈ [0, r_max]` with `Γ(r) = s`: the bracket is halved until
    /// it is narrower than `tol` and `|Γ(r) − s| ≤ tol`, or `PSI_MAX_ITERS`
    /// halvings have been made.
    pub fn invert(&self, s: f64, tol: f64) -> Result<f64> {
        if !(s >= 0.0 && s <= self.gamma_max) {
            return Err(Error::OutOfRange {
                what: "Γ",
                value: s,
                max: self.gamma_max,
            });
        }
        if s == 0.0 {
            return Ok(0.0);
        }
        let (mut lo, mut hi) = (0.0, self.r_max);
        let mut mid = 0.5 * (lo + hi);
        for _ in 0..PSI_MAX_ITERS {
            mid = 0.5 * (lo + hi);
            let g = self.model.gamma(mid)?;
            if hi - lo <= tol && (g - s).abs() <= tol {
                break;
            }
            if g < s {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi <= lo {
                break;
            }
        }
        Ok(mid)
    }
}

/// Coefficient matrix `a_ij(σ)` together with the gradient it was built at.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoefficientMatrix {
    entries: SmallMatrix,
    sigma: Vec3,
}

impl CoefficientMatrix {
    pub fn matrix(&self) -> &SmallMatrix {
        &self.entries
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma[..self.entries.dim()]
    }

    pub fn dim(&self) -> usize {
        self.entries.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.get(i, j)
    }

    pub fn quadratic_form(&self, xi: &[f64]) -> f64 {
        self.entries.quadratic_form(xi)
    }
}

fn check_dim(sigma: &[f64]) -> Result<()> {
    if sigma.is_empty() || sigma.len() > MAX_DIM {
        return Err(Error::Shape(format!("vector of length {} (expected 1..=3)", sigma.len())));
    }
    Ok(())
}

fn check_nonnegative(what: &'static str, r: f64) -> Result<()> {
    if r >= 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(what, format!("requires finite r >= 0, got {r:e}")))
    }
}

fn finite(what: &'static str, r: f64, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::domain(what, format!("non-finite value at r = {r:e}")))
    }
}
