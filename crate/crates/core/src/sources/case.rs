//! Sign structure of `f·g` against the power family: which of the
//! sufficient conditions for a nonnegative remainder apply, and the quantity
//! `Ξ = fg (βΦ' − Λ)` they control.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checks::{check_homogeneity, check_monotonicity_eta, SampleBox};
use super::{eval_g_with_partials, SourceModel};
use crate::error::{Error, Result};
use crate::phi::{PhiModel, PhiTerm};

/// Tolerance for the exact parameter relations (`β = p₁ − 1`, `p₁ = 2`, ...).
const EXACT_TOL: f64 = 1e-12;

/// Tolerance for sampled sign conditions on `f·g`.
const SIGN_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CaseCondition {
    /// `m = 1`, `β = p₁ − 1`, `(p₁ − 2) fg ≥ 0`.
    Yau1,
    /// `m = 1`, `p₁ = 2`, `(β − 1) fg ≥ 0`.
    Yau4,
    /// `m = 1`, `β = 1`, `(2 − p₁) fg ≥ 0`.
    Yau5,
    /// `β ≥ max{1, p_m − 1}`, `fg ≥ 0`.
    Yau2,
    /// all `b_k = 0`, `β ≤ p₁ − 1`, `fg ≤ 0`.
    Yau3,
    /// `m = 1`, `b₁ = 0`, `β = p₁ − 1`.
    YauF,
}

impl CaseCondition {
    pub const ALL: [CaseCondition; 6] = [
        CaseCondition::Yau1,
        CaseCondition::Yau4,
        CaseCondition::Yau5,
        CaseCondition::Yau2,
        CaseCondition::Yau3,
        CaseCondition::YauF,
    ];

    pub fn label(self) -> &'static str {
        match self {
            CaseCondition::Yau1 => "YAU1",
            CaseCondition::Yau4 => "YAU4",
            CaseCondition::Yau5 => "YAU5",
            CaseCondition::Yau2 => "YAU2",
            CaseCondition::Yau3 => "YAU3",
            CaseCondition::YauF => "YAUF",
        }
    }
}

impl fmt::Display for CaseCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaseVerdict {
    pub matched: Vec<CaseCondition>,
    /// Sampled minimum of `f(η) g(ζ, η)`.
    pub min_fg: f64,
    /// Sampled maximum of `f(η) g(ζ, η)`.
    pub max_fg: f64,
    /// Sampled monotonicity in `η` and homogeneity of degree `β` both hold.
    pub preamble_ok: bool,
    pub notes: Vec<String>,
}

impl CaseVerdict {
    pub fn is_matched(&self, c: CaseCondition) -> bool {
        self.matched.contains(&c)
    }
}

fn eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= EXACT_TOL * (1.0 + b.abs())
}

/// Evaluates every condition against the family and the source with
/// `Su = u`. Parameter relations are exact; the sign of `f·g` is sampled
/// over `samples` states in `region` and reported as evidence.
pub fn classify_case(family: &PhiModel, src: &SourceModel, samples: usize, seed: u64, region: SampleBox) -> Result<CaseVerdict> {
    let terms = family
        .terms()
        .ok_or_else(|| Error::Precondition("case analysis needs a power-family model".into()))?;
    let beta = src
        .beta
        .ok_or_else(|| Error::Precondition("case analysis needs a declared degree beta".into()))?;
    if !src.g.eta_dim().accepts(region.n, 1) {
        return Err(Error::Precondition("case analysis needs scalar eta (Su = u)".into()));
    }
    let n = region.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut min_fg, mut max_fg) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..samples {
        let zeta = region.zeta(&mut rng);
        let eta = region.eta(&mut rng, 1);
        let fg = src.f.eval(eta[0]) * eval_g_with_partials(src, &zeta[..n], &eta)?.value;
        min_fg = min_fg.min(fg);
        max_fg = max_fg.max(fg);
    }
    let nonneg = min_fg >= -SIGN_TOL;
    let nonpos = max_fg <= SIGN_TOL;
    // sign of (coef)·fg ≥ 0
    let signed = |coef: f64| {
        if eq(coef, 0.0) {
            true
        } else if coef > 0.0 {
            nonneg
        } else {
            nonpos
        }
    };

    let m = terms.len();
    let p1 = terms[0].p();
    let pm = terms[m - 1].p();
    let all_b_zero = terms.iter().all(|t| t.b() == 0.0);
    let mut matched = Vec::new();
    if m == 1 && eq(beta, p1 - 1.0) && signed(p1 - 2.0) {
        matched.push(CaseCondition::Yau1);
    }
    if m == 1 && eq(p1, 2.0) && signed(beta - 1.0) {
        matched.push(CaseCondition::Yau4);
    }
    if m == 1 && eq(beta, 1.0) && signed(2.0 - p1) {
        matched.push(CaseCondition::Yau5);
    }
    if beta >= 1.0f64.max(pm - 1.0) - EXACT_TOL && nonneg {
        matched.push(CaseCondition::Yau2);
    }
    if all_b_zero && beta <= p1 - 1.0 + EXACT_TOL && nonpos {
        matched.push(CaseCondition::Yau3);
    }
    if m == 1 && terms[0].b() == 0.0 && eq(beta, p1 - 1.0) {
        matched.push(CaseCondition::YauF);
    }

    let mut notes = Vec::new();
    let mono = check_monotonicity_eta(src, samples.min(2_000), seed ^ 0x5eed, region)?;
    if !mono.passed {
        notes.push("g is not nondecreasing in eta on the sampled region".to_string());
    }
    if mono.min_g_eta < 0.0 {
        notes.push(format!("sampled g_eta reaches {:e}", mono.min_g_eta));
    }
    let homog = check_homogeneity(src, samples.min(2_000), seed ^ 0x40a0, region)?;
    if !homog.passed {
        notes.push(format!("g is not homogeneous of degree {beta} in zeta"));
    }
    if !(beta > 0.0) {
        notes.push(format!("homogeneity degree must be positive, got {beta}"));
    }
    notes.push(format!("f*g sampled in [{min_fg:e}, {max_fg:e}] over {samples} states"));
    Ok(CaseVerdict {
        matched,
        min_fg,
        max_fg,
        preamble_ok: mono.passed && homog.passed && beta > 0.0,
        notes,
    })
}

fn family_terms(family: &PhiModel) -> Result<&[PhiTerm]> {
    family
        .terms()
        .ok_or_else(|| Error::Precondition("closed form needs a power-family model".into()))
}

/// `βΦ'(r) − Λ(r) = Σ_k c_k (b_k+r)^{(p_k−4)/2} [(β−1)b_k + (β−p_k+1)r]`.
pub fn beta_phi_minus_lambda(family: &PhiModel, beta: f64, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::domain("beta*phi' - lambda", format!("requires r > 0, got {r:e}")));
    }
    Ok(family_terms(family)?
        .iter()
        .map(|t| {
            let bracket = (beta - 1.0) * t.b() + (beta - t.p() + 1.0) * r;
            if bracket == 0.0 {
                0.0
            } else {
                t.c() * (t.b() + r).powf(0.5 * (t.p() - 4.0)) * bracket
            }
        })
        .sum())
}

/// `Ξ = fg · (βΦ'(r) − Λ(r))` with `r = |∇u|²`.
pub fn xi_sign(family: &PhiModel, fg: f64, r: f64, beta: f64) -> Result<f64> {
    Ok(fg * beta_phi_minus_lambda(family, beta, r)?)
}
