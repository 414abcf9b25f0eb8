//! Explicit ellipticity constants for the power family and a Monte-Carlo
//! check of the structural inequalities they are supposed to satisfy.
//!
//! Two growth regimes are supported, both restricted to gradients in the ball
//! `B_M`:
//!
//! * regime A: `C₁(a+|σ|)^{p−2} ≤ Φ'(|σ|²) ≤ C₂(a+|σ|)^{p−2}`, with the same
//!   envelope (times `|ξ|²`) bounding the quadratic form `a_ij ξ_i ξ_j`;
//! * regime B: envelope `(1+|σ|)^{−1}`, with the form measured against
//!   `|ξ'|²` where `ξ' = (ξ, σ·ξ)` is the lift of `ξ` to the graph tangent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::phi::{LambdaFloor, PhiModel, PhiTerm};
use crate::small::{dot, norm_sq, Vec3, MAX_DIM};

/// Relative slack applied to every sampled inequality.
pub const VIOLATION_SLACK: f64 = 1e-9;

/// Smallest sampled gradient norm.
pub const MIN_SIGMA: f64 = 1e-6;

/// At most this many witnesses are stored; the count is always exact.
pub const MAX_WITNESSES: usize = 32;

const BLOCK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    A,
    B,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::A => "A",
            Regime::B => "B",
        }
    }
}

/// Which of the four sampled inequalities failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    PhiLower,
    PhiUpper,
    FormLower,
    FormUpper,
}

/// A sampled `(σ, ξ)` pair at which an inequality failed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Witness {
    pub sigma: Vec3,
    pub xi: Vec3,
    pub bound: Bound,
    pub value: f64,
    pub limit: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EllipticityCertificate {
    pub regime: Regime,
    /// Growth exponent of the regime-A envelope (unused in regime B).
    pub p: f64,
    /// Shift of the regime-A envelope (unused in regime B).
    pub a: f64,
    pub m: f64,
    pub mu: f64,
    pub c1_phi: f64,
    pub c2_phi: f64,
    pub c1_form: f64,
    pub c2_form: f64,
    pub violation_count: usize,
    pub witnesses: Vec<Witness>,
    pub warnings: Vec<String>,
    pub samples: usize,
    pub seed: u64,
}

impl EllipticityCertificate {
    /// A certificate with user-chosen constants and no sampling evidence.
    #[allow(clippy::too_many_arguments)]
    pub fn manual(regime: Regime, p: f64, a: f64, m: f64, mu: f64, c_phi: (f64, f64), c_form: (f64, f64)) -> Self {
        EllipticityCertificate {
            regime,
            p,
            a,
            m,
            mu,
            c1_phi: c_phi.0,
            c2_phi: c_phi.1,
            c1_form: c_form.0,
            c2_form: c_form.1,
            violation_count: 0,
            witnesses: Vec::new(),
            warnings: Vec::new(),
            samples: 0,
            seed: 0,
        }
    }

    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }

    /// The envelope `(a+|σ|)^{p−2}` or `(1+|σ|)^{−1}` at gradient norm `s`.
    pub fn envelope(&self, s: f64) -> f64 {
        match self.regime {
            Regime::A => (self.a + s).powf(self.p - 2.0),
            Regime::B => 1.0 / (1.0 + s),
        }
    }

    /// Flat key-value view for reports.
    pub fn to_record(&self) -> Vec<(&'static str, String)> {
        vec![
            ("regime", self.regime.name().to_string()),
            ("p", fmt_f(self.p)),
            ("a", fmt_f(self.a)),
            ("M", fmt_f(self.m)),
            ("mu", fmt_f(self.mu)),
            ("c1_phi", fmt_f(self.c1_phi)),
            ("c2_phi", fmt_f(self.c2_phi)),
            ("c1_form", fmt_f(self.c1_form)),
            ("c2_form", fmt_f(self.c2_form)),
            ("violations", self.violation_count.to_string()),
            ("samples", self.samples.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn family_terms(model: &PhiModel) -> Result<&[PhiTerm]> {
    model
        .terms()
        .ok_or_else(|| Error::Precondition("explicit constants need a power-family model".into()))
}

fn check_mu_m(mu: f64, m: f64) -> Result<()> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::Precondition(format!("0 < mu < 1 violated (mu = {mu})")));
    }
    if !(m >= 1.0 && m.is_finite()) {
        return Err(Error::Precondition(format!("M >= 1 violated (M = {m})")));
    }
    Ok(())
}

/// `Σ_k c_k (base)^{(p_k − shift)/2}`.
fn weighted_power_sum(terms: &[PhiTerm], base: f64, shift: f64) -> f64 {
    terms.iter().map(|t| t.c() * base.powf(0.5 * (t.p() - shift))).sum()
}

/// Regime-A constants for a power family whose shifts are comparable:
/// `p₁ > 1` and `μb₁ ≤ b_k ≤ b₁/μ`.
pub fn constants_assumption_a(model: &PhiModel, mu: f64, m: f64) -> Result<EllipticityCertificate> {
    let terms = family_terms(model)?;
    check_mu_m(mu, m)?;
    let first = terms[0];
    let p1 = first.p();
    if !(p1 > 1.0) {
        return Err(Error::Precondition(format!("p_1 > 1 violated (p_1 = {p1})")));
    }
    let b1 = first.b();
    for (k, t) in terms.iter().enumerate() {
        if t.b() < mu * b1 || t.b() > b1 / mu {
            return Err(Error::Precondition(format!(
                "mu*b_1 <= b_k <= b_1/mu violated for k = {} (b_k = {}, b_1 = {b1}, mu = {mu})",
                k + 1,
                t.b()
            )));
        }
    }
    let pm = terms[terms.len() - 1].p();
    let gap = 0.5 * (p1 - 2.0).abs();
    let sum = weighted_power_sum(terms, b1 / mu + m * m, p1);
    let outer = (2.0 / mu).powf(gap);
    Ok(EllipticityCertificate::manual(
        Regime::A,
        p1,
        b1.sqrt(),
        m,
        mu,
        (first.c() * 0.5f64.powf(gap), outer * sum),
        (first.c() * (p1 - 1.0).min(1.0) * (0.5 * mu).powf(gap), outer * (pm + 1.0) * sum),
    ))
}

/// Regime-B constants for a power family with `μ ≤ b_k ≤ 1/μ`.
pub fn constants_assumption_b(model: &PhiModel, mu: f64, m: f64) -> Result<EllipticityCertificate> {
    let terms = family_terms(model)?;
    check_mu_m(mu, m)?;
    for (k, t) in terms.iter().enumerate() {
        if t.b() < mu || t.b() > 1.0 / mu {
            return Err(Error::Precondition(format!(
                "mu <= b_k <= 1/mu violated for k = {} (b_k = {}, mu = {mu})",
                k + 1,
                t.b()
            )));
        }
    }
    let first = terms[0];
    let p1 = first.p();
    let base = 1.0 / mu + m * m;
    let root = (2.0 / mu).sqrt();
    let lower = first.c() * mu.powf(0.5 * p1);
    let form_upper: f64 = terms
        .iter()
        .map(|t| t.c() * ((t.p() - 2.0).abs() + 1.0) * base.powf(0.5 * (t.p() - 1.0)))
        .sum();
    let mut cert = EllipticityCertificate::manual(
        Regime::B,
        p1,
        0.0,
        m,
        mu,
        (lower, root * weighted_power_sum(terms, base, 1.0)),
        (lower * (p1 - 1.0).min(1.0) / (1.0 + m * m), root * form_upper),
    );
    if cert.c1_form <= 0.0 {
        cert.warnings.push(format!(
            "lower form constant vanishes (p_1 = {p1}); the regime-B lower bound is vacuous"
        ));
    }
    Ok(cert)
}

/// Samples `samples` pairs `(σ, ξ)` with `σ` in `B_M ∖ B_{1e-6}` (uniform
/// direction, uniform radius) and `ξ` on the unit sphere of `ℝⁿ`, and records
/// every inequality of the certificate's regime that fails by more than
/// `VIOLATION_SLACK` relative. The result does not depend on the thread count.
pub fn verify_bounds(
    model: &PhiModel,
    cert: &EllipticityCertificate,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<EllipticityCertificate> {
    if !(1..=MAX_DIM).contains(&n) {
        return Err(Error::Shape(format!("dimension {n} not in 1..=3")));
    }
    let blocks = samples.div_ceil(BLOCK);
    let results: Vec<Result<(usize, Vec<Witness>)>> = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(block as u64);
            let count = BLOCK.min(samples - block * BLOCK);
            let mut found = 0;
            let mut witnesses = Vec::new();
            for _ in 0..count {
                let sigma = random_ball_point(&mut rng, n, cert.m);
                let xi = random_unit(&mut rng, n);
                for w in check_pair(model, cert, n, &sigma, &xi)? {
                    found += 1;
                    if witnesses.len() < MAX_WITNESSES {
                        witnesses.push(w);
                    }
                }
            }
            Ok((found, witnesses))
        })
        .collect();
    let mut out = cert.clone();
    out.violation_count = 0;
    out.witnesses.clear();
    out.samples = samples;
    out.seed = seed;
    for r in results {
        let (found, witnesses) = r?;
        out.violation_count += found;
        let room = MAX_WITNESSES - out.witnesses.len();
        out.witnesses.extend(witnesses.into_iter().take(room));
    }
    Ok(out)
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec3 {
    loop {
        let mut v = [0.0; MAX_DIM];
        for x in v.iter_mut().take(n) {
            *x = rng.sample(StandardNormal);
        }
        let len = norm_sq(&v).sqrt();
        if len > 1e-12 {
            return v.map(|x| x / len);
        }
    }
}

fn random_ball_point(rng: &mut ChaCha8Rng, n: usize, m: f64) -> Vec3 {
    let dir = random_unit(rng, n);
    let radius = rng.random_range(MIN_SIGMA..m.max(MIN_SIGMA * 2.0));
    dir.map(|x| x * radius)
}

fn check_pair(model: &PhiModel, cert: &EllipticityCertificate, n: usize, sigma: &Vec3, xi: &Vec3) -> Result<Vec<Witness>> {
    let s = norm_sq(&sigma[..n]).sqrt();
    let env = cert.envelope(s);
    let a = model.coefficient_matrix(&sigma[..n])?;
    let phi1 = model.phi1(s * s)?;
    let form = a.quadratic_form(&xi[..n]);
    let weight = match cert.regime {
        Regime::A => norm_sq(&xi[..n]),
        Regime::B => {
            let lift = dot(&sigma[..n], &xi[..n]);
            norm_sq(&xi[..n]) + lift * lift
        }
    };
    let checks = [
        (Bound::PhiLower, cert.c1_phi * env, phi1, true),
        (Bound::PhiUpper, cert.c2_phi * env, phi1, false),
        (Bound::FormLower, cert.c1_form * env * weight, form, true),
        (Bound::FormUpper, cert.c2_form * env * weight, form, false),
    ];
    let mut out = Vec::new();
    for (bound, limit, value, is_lower) in checks {
        let slack = VIOLATION_SLACK * limit.abs().max(value.abs());
        let bad = if is_lower {
            value < limit - slack
        } else {
            value > limit + slack
        };
        if bad || !value.is_finite() {
            out.push(Witness {
                sigma: *sigma,
                xi: *xi,
                bound,
                value,
                limit,
            });
        }
    }
    Ok(out)
}

/// Minimum of `Λ` over the working range `[1e-8·M², M²]`.
pub fn lambda_floor(model: &PhiModel, m: f64) -> Result<LambdaFloor> {
    model.lambda_floor(m)
}

/// Draws a random family satisfying the hypotheses of the given regime:
/// regime A uses `b₁ ∈ [0, 2]` with all shifts within a factor `1/μ` of it,
/// regime B uses shifts in `[μ, 1/μ]`. Returns the family and `μ`.
pub fn random_family<R: Rng>(regime: Regime, rng: &mut R) -> (PhiModel, f64) {
    let mu = rng.random_range(0.2..0.9);
    let count = rng.random_range(1..=3);
    let b1: f64 = match regime {
        Regime::A if rng.random_bool(0.3) => 0.0,
        Regime::A => rng.random_range(0.05..2.0),
        Regime::B => rng.random_range(mu..1.0 / mu),
    };
    let mut terms = Vec::with_capacity(count);
    // the first term carries the smallest exponent and the reference shift
    let p1: f64 = match regime {
        Regime::A => rng.random_range(1.1..3.0),
        Regime::B => rng.random_range(1.0..3.0),
    };
    terms.push(PhiTerm::new(rng.random_range(0.2..3.0), b1, p1).expect("valid term"));
    for _ in 1..count {
        let b = match regime {
            Regime::A => b1 * rng.random_range(mu..1.0 / mu),
            Regime::B => rng.random_range(mu..1.0 / mu),
        };
        let p = p1 + rng.random_range(0.0..3.0);
        terms.push(PhiTerm::new(rng.random_range(0.2..3.0), b, p).expect("valid term"));
    }
    (PhiModel::family(terms).expect("nonempty family"), mu)
}
