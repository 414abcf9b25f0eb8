//! Right-hand side of the equation: the reaction term `f(u)`, the gradient
//! coupling `g(∇u, Su)`, and the operator `S` feeding `g`'s second slot.

mod case;
mod checks;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quad::adaptive_simpson;
use crate::small::{dot, norm_sq, pad, SmallMatrix, Vec3, MAX_DIM};

pub use case::{beta_phi_minus_lambda, classify_case, xi_sign, CaseCondition, CaseVerdict};
pub use checks::{
    check_homogeneity, check_monotonicity_eta, HomogeneityReport, HomogeneityWitness, MonotonicityReport, SampleBox,
};

use crate::phi::ScalarMap;

/// Tolerance of the adaptive Simpson fallback for `F₀`.
pub const PRIMITIVE_TOL: f64 = 1e-10;

/// A scalar function with its derivative and, optionally, a closed-form
/// antiderivative vanishing at 0.
#[derive(Clone)]
pub struct ScalarFn {
    name: String,
    value: ScalarMap,
    derivative: ScalarMap,
    antiderivative: Option<ScalarMap>,
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarFn({})", self.name)
    }
}

impl ScalarFn {
    pub fn new(name: impl Into<String>, value: ScalarMap, derivative: ScalarMap) -> Self {
        ScalarFn {
            name: name.into(),
            value,
            derivative,
            antiderivative: None,
        }
    }

    pub fn with_antiderivative(mut self, primitive: ScalarMap) -> Self {
        self.antiderivative = Some(primitive);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.value)(x)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        (self.derivative)(x)
    }

    pub fn has_closed_primitive(&self) -> bool {
        self.antiderivative.is_some()
    }

    /// `∫₀ˣ` of the function: closed form when supplied, otherwise adaptive
    /// Simpson with tolerance `PRIMITIVE_TOL`.
    pub fn primitive(&self, x: f64) -> Result<f64> {
        let v = match &self.antiderivative {
            Some(p) => p(x),
            None => adaptive_simpson(&|t| (self.value)(t), 0.0, x, PRIMITIVE_TOL),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::domain("antiderivative", format!("non-finite value at {x}")))
        }
    }

    /// Compares the derivative (and antiderivative) with central differences
    /// at `x`, relative tolerance `1e-5`.
    pub fn cross_check(&self, x: f64) -> Result<()> {
        let h = 1e-5 * x.abs().max(1.0);
        let fd = (self.eval(x + h) - self.eval(x - h)) / (2.0 * h);
        agree(&self.name, "derivative", self.deriv(x), fd)?;
        if let Some(p) = &self.antiderivative {
            let fd = (p(x + h) - p(x - h)) / (2.0 * h);
            agree(&self.name, "antiderivative", self.eval(x), fd)?;
            if p(0.0).abs() > 1e-12 {
                return Err(Error::Precondition(format!("antiderivative of {} does not vanish at 0", self.name)));
            }
        }
        Ok(())
    }

    /// `u³ − u`, with primitive `u⁴/4 − u²/2`.
    pub fn allen_cahn() -> Self {
        ScalarFn::new("allen_cahn", Arc::new(|u| u * u * u - u), Arc::new(|u| 3.0 * u * u - 1.0))
            .with_antiderivative(Arc::new(|u| 0.25 * u.powi(4) - 0.5 * u * u))
    }

    /// `λu`.
    pub fn linear(lambda: f64) -> Self {
        ScalarFn::new("linear", Arc::new(move |u| lambda * u), Arc::new(move |_| lambda))
            .with_antiderivative(Arc::new(move |u| 0.5 * lambda * u * u))
    }

    pub fn zero() -> Self {
        ScalarFn::new("zero", Arc::new(|_| 0.0), Arc::new(|_| 0.0)).with_antiderivative(Arc::new(|_| 0.0))
    }

    pub fn identity() -> Self {
        ScalarFn::new("identity", Arc::new(|u| u), Arc::new(|_| 1.0)).with_antiderivative(Arc::new(|u| 0.5 * u * u))
    }

    pub fn exp() -> Self {
        ScalarFn::new("exp", Arc::new(f64::exp), Arc::new(f64::exp)).with_antiderivative(Arc::new(f64::exp_m1))
    }

    pub fn cube() -> Self {
        ScalarFn::new("cube", Arc::new(|u| u * u * u), Arc::new(|u| 3.0 * u * u))
            .with_antiderivative(Arc::new(|u| 0.25 * u.powi(4)))
    }

    /// `η + η³/3`, strictly increasing with derivative `1 + η²`.
    pub fn cubic_increasing() -> Self {
        ScalarFn::new("cubic_increasing", Arc::new(|u| u + u * u * u / 3.0), Arc::new(|u| 1.0 + u * u))
            .with_antiderivative(Arc::new(|u| 0.5 * u * u + u.powi(4) / 12.0))
    }

    pub fn negate(&self) -> Self {
        let (v, d) = (self.value.clone(), self.derivative.clone());
        let mut out = ScalarFn::new(format!("-{}", self.name), Arc::new(move |x| -v(x)), Arc::new(move |x| -d(x)));
        if let Some(p) = self.antiderivative.clone() {
            out.antiderivative = Some(Arc::new(move |x| -p(x)));
        }
        out
    }
}

fn agree(name: &str, what: &str, exact: f64, fd: f64) -> Result<()> {
    let scale = exact.abs().max(fd.abs()).max(1.0);
    if (exact - fd).abs() > 1e-5 * scale {
        return Err(Error::Precondition(format!(
            "{what} of {name} disagrees with finite differences: {exact} vs {fd}"
        )));
    }
    Ok(())
}

/// Value and partial derivatives of `g(ζ, η)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingEval {
    pub value: f64,
    pub d_zeta: Vec3,
    pub d_eta: Vec<f64>,
}

pub type CouplingMap = Arc<dyn Fn(&[f64], &[f64]) -> CouplingEval + Send + Sync>;

/// The gradient coupling `g(ζ, η)` with its partials.
#[derive(Clone)]
pub struct Coupling {
    name: String,
    /// Width of `η` relative to the spatial dimension `n`.
    eta_dim: EtaDim,
    map: CouplingMap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EtaDim {
    /// `η` has this fixed length.
    Fixed(usize),
    /// `η` has length `n + 1`.
    DimPlusOne,
    /// Any length (the coupling ignores `η`).
    Any,
}

impl EtaDim {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            EtaDim::Fixed(m) => m,
            EtaDim::DimPlusOne => n + 1,
            EtaDim::Any => 1,
        }
    }

    pub fn accepts(self, n: usize, m: usize) -> bool {
        match self {
            EtaDim::Fixed(k) => k == m,
            EtaDim::DimPlusOne => m == n + 1,
            EtaDim::Any => true,
        }
    }
}

impl fmt::Debug for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Coupling({})", self.name)
    }
}

impl Coupling {
    pub fn new(name: impl Into<String>, eta_dim: EtaDim, map: CouplingMap) -> Self {
        Coupling {
            name: name.into(),
            eta_dim,
            map,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eta_dim(&self) -> EtaDim {
        self.eta_dim
    }

    pub fn eval(&self, zeta: &[f64], eta: &[f64]) -> CouplingEval {
        (self.map)(zeta, eta)
    }

    /// `g ≡ 0`.
    pub fn zero() -> Self {
        Coupling::new(
            "zero",
            EtaDim::Any,
            Arc::new(|_, eta| CouplingEval {
                value: 0.0,
                d_zeta: [0.0; MAX_DIM],
                d_eta: vec![0.0; eta.len()],
            }),
        )
    }

    /// `|ζ|^β h(η)` with scalar `η`, homogeneous of degree `β` in `ζ`.
    pub fn power_drift(beta: f64, h: ScalarFn) -> Self {
        Coupling::new(
            format!("power_drift({beta},{})", h.name()),
            EtaDim::Fixed(1),
            Arc::new(move |zeta, eta| {
                let r = norm_sq(zeta);
                let hv = h.eval(eta[0]);
                let norm_beta = if r == 0.0 { 0.0 } else { r.powf(0.5 * beta) };
                // β|ζ|^{β−2}ζ, continuous at ζ = 0 for β > 1
                let radial = if r == 0.0 { 0.0 } else { beta * r.powf(0.5 * beta - 1.0) };
                let mut d_zeta = [0.0; MAX_DIM];
                for (d, z) in d_zeta.iter_mut().zip(zeta) {
                    *d = radial * z * hv;
                }
                CouplingEval {
                    value: norm_beta * hv,
                    d_zeta,
                    d_eta: vec![norm_beta * h.deriv(eta[0])],
                }
            }),
        )
    }

    /// `Σ_{j≤n} ζ_j η_j + η_{n+1}`, paired with `Su = (c(x), h(u))`.
    pub fn bilinear_drift() -> Self {
        Coupling::new(
            "bilinear_drift",
            EtaDim::DimPlusOne,
            Arc::new(|zeta, eta| {
                let n = zeta.len();
                let mut d_eta = vec![0.0; n + 1];
                d_eta[..n].copy_from_slice(zeta);
                d_eta[n] = 1.0;
                CouplingEval {
                    value: dot(zeta, &eta[..n]) + eta[n],
                    d_zeta: pad(&eta[..n]),
                    d_eta,
                }
            }),
        )
    }

    /// `(c·ζ) η` with scalar `η`, paired with `Su = h(u)`.
    pub fn constant_drift(c: &[f64]) -> Self {
        let c = pad(c);
        Coupling::new(
            "constant_drift",
            EtaDim::Fixed(1),
            Arc::new(move |zeta, eta| {
                let cz = dot(&c[..zeta.len()], zeta);
                CouplingEval {
                    value: cz * eta[0],
                    d_zeta: c.map(|ci| ci * eta[0]),
                    d_eta: vec![cz],
                }
            }),
        )
    }
}

/// `f`, `g` and the declared homogeneity degree of `g` in `ζ`.
#[derive(Clone, Debug)]
pub struct SourceModel {
    pub f: ScalarFn,
    pub g: Coupling,
    pub beta: Option<f64>,
}

impl SourceModel {
    pub fn new(f: ScalarFn, g: Coupling, beta: Option<f64>) -> Self {
        SourceModel { f, g, beta }
    }

    /// `f` alone, `g ≡ 0`.
    pub fn reaction(f: ScalarFn) -> Self {
        SourceModel::new(f, Coupling::zero(), None)
    }

    /// `F₀(x) = ∫₀ˣ f`.
    pub fn primitive(&self, x: f64) -> Result<f64> {
        self.f.primitive(x)
    }

    pub fn couples(&self) -> bool {
        self.g.name() != "zero"
    }
}

/// `g(ζ, η)` and its partials, rejecting non-finite output.
pub fn eval_g_with_partials(src: &SourceModel, zeta: &[f64], eta: &[f64]) -> Result<CouplingEval> {
    let out = src.g.eval(zeta, eta);
    let n = zeta.len();
    if !out.value.is_finite() {
        return Err(Error::NonFinite { what: "g", index: 0 });
    }
    if let Some(k) = out.d_zeta[..n].iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "g_zeta", index: k });
    }
    if let Some(k) = out.d_eta.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "g_eta", index: k });
    }
    Ok(out)
}

/// [`eval_g_with_partials`] plus a central-difference check of every
/// partial (relative tolerance `1e-5`).
pub fn eval_g_checked(src: &SourceModel, zeta: &[f64], eta: &[f64]) -> Result<CouplingEval> {
    let out = eval_g_with_partials(src, zeta, eta)?;
    let diff = |z: &[f64], e: &[f64]| src.g.eval(z, e).value;
    for k in 0..zeta.len() {
        let h = 1e-6 * zeta[k].abs().max(1.0);
        let (mut zp, mut zm) = (zeta.to_vec(), zeta.to_vec());
        zp[k] += h;
        zm[k] -= h;
        agree(src.g.name(), "g_zeta", out.d_zeta[k], (diff(&zp, eta) - diff(&zm, eta)) / (2.0 * h))?;
    }
    for k in 0..eta.len() {
        let h = 1e-6 * eta[k].abs().max(1.0);
        let (mut ep, mut em) = (eta.to_vec(), eta.to_vec());
        ep[k] += h;
        em[k] -= h;
        agree(src.g.name(), "g_eta", out.d_eta[k], (diff(zeta, &ep) - diff(zeta, &em)) / (2.0 * h))?;
    }
    Ok(out)
}

/// A smooth vector field `c(x)` returning its value and Jacobian `∂c_j/∂x_k`.
pub type DriftMap = Arc<dyn Fn(&[f64]) -> (Vec3, SmallMatrix) + Send + Sync>;

/// The operator `S` producing the second argument of `g`.
#[derive(Clone)]
pub enum SOperator {
    /// `Su = u`.
    Identity,
    /// `Su = |u|^{q−1}u`, `q ≥ 1`.
    PowerU { q: f64 },
    /// `Su = h(u)`.
    Map(ScalarFn),
    /// `Su = (c(x), h(u))`, of length `n + 1`.
    DriftField { c: DriftMap, h: ScalarFn },
    /// `Su = (c, h(u))` with constant `c`, of length `n + 1`.
    ConstantDrift { c: Vec3, h: ScalarFn },
}

impl fmt::Debug for SOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SOperator::Identity => f.write_str("Identity"),
            SOperator::PowerU { q } => write!(f, "PowerU({q})"),
            SOperator::Map(h) => write!(f, "Map({})", h.name()),
            SOperator::DriftField { h, .. } => write!(f, "DriftField(.., {})", h.name()),
            SOperator::ConstantDrift { c, h } => write!(f, "ConstantDrift({c:?}, {})", h.name()),
        }
    }
}

/// `Su` at a point and its spatial derivatives, `jac[j][k] = ∂S^{[j]}u/∂x_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SEval {
    pub value: Vec<f64>,
    pub jac: Vec<Vec3>,
}

impl SOperator {
    pub fn power_u(q: f64) -> Result<Self> {
        if !(q >= 1.0 && q.is_finite()) {
            return Err(Error::Precondition(format!("power S needs q >= 1, got {q}")));
        }
        Ok(SOperator::PowerU { q })
    }

    /// Length of `Su` in dimension `n`.
    pub fn eta_dim(&self, n: usize) -> usize {
        match self {
            SOperator::Identity | SOperator::PowerU { .. } | SOperator::Map(_) => 1,
            SOperator::DriftField { .. } | SOperator::ConstantDrift { .. } => n + 1,
        }
    }

    /// The value of `Su` only.
    pub fn value(&self, u: f64, x: &[f64]) -> Vec<f64> {
        match self {
            SOperator::Identity => vec![u],
            SOperator::PowerU { q } => vec![u.abs().powf(q - 1.0) * u],
            SOperator::Map(h) => vec![h.eval(u)],
            SOperator::DriftField { c, h } => {
                let n = x.len();
                let mut v = c(x).0[..n].to_vec();
                v.push(h.eval(u));
                v
            }
            SOperator::ConstantDrift { c, h } => {
                let mut v = c[..x.len()].to_vec();
                v.push(h.eval(u));
                v
            }
        }
    }

    /// `Su` and its spatial derivative rule given `u`, `∇u` and `x`.
    pub fn eval(&self, u: f64, grad: &[f64], x: &[f64]) -> SEval {
        let n = grad.len();
        let chain = |dh: f64| -> Vec3 {
            let mut row = [0.0; MAX_DIM];
            for (r, g) in row.iter_mut().zip(grad) {
                *r = dh * g;
            }
            row
        };
        match self {
            SOperator::Identity => SEval {
                value: vec![u],
                jac: vec![chain(1.0)],
            },
            SOperator::PowerU { q } => {
                let dh = if *q == 1.0 { 1.0 } else { q * u.abs().powf(q - 1.0) };
                SEval {
                    value: vec![u.abs().powf(q - 1.0) * u],
                    jac: vec![chain(dh)],
                }
            }
            SOperator::Map(h) => SEval {
                value: vec![h.eval(u)],
                jac: vec![chain(h.deriv(u))],
            },
            SOperator::DriftField { c, h } => {
                let (cv, dc) = c(x);
                let mut value = cv[..n].to_vec();
                value.push(h.eval(u));
                let mut jac: Vec<Vec3> = (0..n)
                    .map(|j| {
                        let mut row = [0.0; MAX_DIM];
                        for (k, r) in row.iter_mut().enumerate().take(n) {
                            *r = dc.get(j, k);
                        }
                        row
                    })
                    .collect();
                jac.push(chain(h.deriv(u)));
                SEval { value, jac }
            }
            SOperator::ConstantDrift { c, h } => {
                let mut value = c[..n].to_vec();
                value.push(h.eval(u));
                let mut jac = vec![[0.0; MAX_DIM]; n];
                jac.push(chain(h.deriv(u)));
                SEval { value, jac }
            }
        }
    }
}

/// Free-function form of [`SOperator::eval`].
pub fn s_operator_eval(s: &SOperator, u: f64, grad: &[f64], x: &[f64]) -> SEval {
    s.eval(u, grad, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_drift_partials() {
        let src = SourceModel::new(ScalarFn::zero(), Coupling::power_drift(3.0, ScalarFn::exp()), Some(3.0));
        let e = eval_g_with_partials(&src, &[1.0, 0.0], &[0.0]).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(&e.d_zeta[..2], &[3.0, 0.0]);
        assert_eq!(e.d_eta, vec![1.0]);
        eval_g_checked(&src, &[0.3, -0.7], &[0.4]).unwrap();
    }

    #[test]
    fn zero_and_bilinear() {
        let src = SourceModel::reaction(ScalarFn::allen_cahn());
        let e = eval_g_with_partials(&src, &[1.0, 2.0], &[0.5]).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.d_zeta, [0.0; 3]);
        assert_eq!(e.d_eta, vec![0.0]);

        let src = SourceModel::new(ScalarFn::zero(), Coupling::bilinear_drift(), Some(1.0));
        let e = eval_g_with_partials(&src, &[2.0, 3.0], &[1.0, 1.0, 5.0]).unwrap();
        assert_eq!(e.d_eta, vec![2.0, 3.0, 1.0]);
        assert_eq!(e.value, 10.0);
        eval_g_checked(&src, &[2.0, 3.0], &[1.0, 1.0, 5.0]).unwrap();
    }

    #[test]
    fn wrong_partials_are_caught() {
        let g = Coupling::new(
            "bad",
            EtaDim::Fixed(1),
            Arc::new(|z, e| CouplingEval {
                value: z[0] * e[0],
                d_zeta: [2.0 * e[0], 0.0, 0.0],
                d_eta: vec![z[0]],
            }),
        );
        let src = SourceModel::new(ScalarFn::zero(), g, None);
        assert!(eval_g_checked(&src, &[1.0], &[1.0]).is_err());
        let nan = Coupling::new(
            "nan",
            EtaDim::Fixed(1),
            Arc::new(|_, _| CouplingEval {
                value: f64::NAN,
                d_zeta: [0.0; 3],
                d_eta: vec![0.0],
            }),
        );
        let src = SourceModel::new(ScalarFn::zero(), nan, None);
        assert!(matches!(eval_g_with_partials(&src, &[1.0], &[1.0]), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn s_operator_rules() {
        let e = SOperator::Identity.eval(0.3, &[1.0, 2.0], &[0.0, 0.0]);
        assert_eq!(e.value, vec![0.3]);
        assert_eq!(&e.jac[0][..2], &[1.0, 2.0]);

        let e = SOperator::power_u(3.0).unwrap().eval(2.0, &[1.0, 0.0], &[0.0, 0.0]);
        assert_eq!(e.value, vec![8.0]);
        assert_eq!(&e.jac[0][..2], &[12.0, 0.0]);
        assert!(SOperator::power_u(0.5).is_err());

        let s = SOperator::ConstantDrift {
            c: [1.0, 0.0, 0.0],
            h: ScalarFn::identity(),
        };
        let e = s_operator_eval(&s, 5.0, &[2.0, 0.0], &[0.0, 0.0]);
        assert_eq!(e.value, vec![1.0, 0.0, 5.0]);
        assert_eq!(e.jac.len(), 3);
        assert_eq!(&e.jac[0][..2], &[0.0, 0.0]);
        assert_eq!(&e.jac[1][..2], &[0.0, 0.0]);
        assert_eq!(&e.jac[2][..2], &[2.0, 0.0]);
        assert_eq!(s.eta_dim(2), 3);
    }

    #[test]
    fn drift_field_uses_jacobian() {
        let c: DriftMap = Arc::new(|x: &[f64]| {
            let v = [x[0].sin(), x[1], 0.0];
            let mut j = SmallMatrix::zeros(2);
            j.set(0, 0, x[0].cos());
            j.set(1, 1, 1.0);
            (v, j)
        });
        let s = SOperator::DriftField {
            c,
            h: ScalarFn::cube(),
        };
        let e = s.eval(2.0, &[1.0, -1.0], &[0.0, 3.0]);
        assert_eq!(e.value, vec![0.0, 3.0, 8.0]);
        assert_eq!(&e.jac[0][..2], &[1.0, 0.0]);
        assert_eq!(&e.jac[1][..2], &[0.0, 1.0]);
        assert_eq!(&e.jac[2][..2], &[12.0, -12.0]);
    }

    #[test]
    fn builtin_scalars_are_consistent() {
        for f in [
            ScalarFn::allen_cahn(),
            ScalarFn::linear(-2.5),
            ScalarFn::zero(),
            ScalarFn::identity(),
            ScalarFn::exp(),
            ScalarFn::cube(),
            ScalarFn::cubic_increasing(),
            ScalarFn::allen_cahn().negate(),
        ] {
            for x in [-1.3, 0.0, 0.4, 2.0] {
                f.cross_check(x).unwrap();
            }
        }
    }

    #[test]
    fn numeric_primitive_matches_closed_form() {
        let closed = ScalarFn::allen_cahn();
        let numeric = ScalarFn::new("ac", Arc::new(|u| u * u * u - u), Arc::new(|u| 3.0 * u * u - 1.0));
        for x in [-1.5, -0.2, 0.0, 0.9, 1.0] {
            let a = closed.primitive(x).unwrap();
            let b = numeric.primitive(x).unwrap();
            assert!((a - b).abs() < 1e-10, "{x}: {a} vs {b}");
        }
        assert_eq!(closed.primitive(1.0).unwrap(), -0.25);
    }
}
