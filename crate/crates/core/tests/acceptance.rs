//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Runs without the libtest harness so the lines always print.

use std::f64::consts::{PI, SQRT_2};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use modica_core::ellipticity::{constants_assumption_a, constants_assumption_b, random_family, verify_bounds, Regime};
use modica_core::fields::{gradient_of, sample_field, Grid, ScalarField};
use modica_core::pfunc::{
    build_gauge, counterexample_suite, gamma_sqrt_bound, lemma_residual, p_field, remainder_at, remainder_field,
    rigidity_check, DerivativeMode, RigidityInput, RigidityVerdict,
};
use modica_core::phi::GammaInverse;
use modica_core::small::{dot, norm_sq, SmallMatrix};
use modica_core::solver::{residual_field, solve_newton, tanh_heteroclinic, SolveParams};
use modica_core::sources::{
    classify_case, xi_sign, CaseCondition, Coupling, SOperator, SampleBox, ScalarFn, SourceModel,
};
use modica_core::PhiModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// pinned tolerances
const TANH_ANALYTIC_TOL: f64 = 1e-10;
const FLAGSHIP_RESIDUAL: f64 = 1e-10;
const FLAGSHIP_MAX_ITERS: usize = 30;
const ELLIPTICITY_SAMPLES: usize = 100_000;
const FAMILIES_PER_REGIME: usize = 100;
const SIGN_TOL: f64 = 1e-12;
const CLOSED_FORM_REL: f64 = 1e-10;
const STATES: usize = 10_000;
const COUNTEREXAMPLE_REL: f64 = 1e-8;
const SLOPE_TOL: f64 = 0.05;
const ROUND_TRIP_TOL: f64 = 1e-10;
const PSI_FAMILIES: usize = 50;

type Criterion = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
    budget: Option<Duration>,
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let in_time = out.budget.is_none_or(|b| elapsed <= b);
    let pass = out.pass && in_time;
    let budget = out.budget.map(|b| format!(" (budget {:.0} s)", b.as_secs_f64())).unwrap_or_default();
    println!(
        "{} {id} {name}: {} [{:.2} s{budget}]",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64()
    );
    pass
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn random_unit_ball(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-radius..radius)).collect();
        let r = norm_sq(&v);
        if r <= radius * radius && r > 1e-6 {
            return v;
        }
    }
}

fn modica_equality() -> Outcome {
    let src = SourceModel::reaction(ScalarFn::allen_cahn());
    let lap = PhiModel::laplacian();
    let grid = Grid::interval(-20.0, 20.0, 512).unwrap();
    let sol = tanh_heteroclinic(&grid).unwrap();
    let gauge = build_gauge(&src, &sol.field).unwrap();
    let grad = sol.gradient.clone();
    let exact = p_field(&lap, &gauge, &sol.field, DerivativeMode::Analytic(&*grad), TANH_ANALYTIC_TOL).unwrap();
    let worst = exact.values.iter_active().fold(0.0f64, |m, (_, v)| m.max(v.abs()));
    let h = grid.spacing(0);
    let fd = p_field(&lap, &gauge, &sol.field, DerivativeMode::FiniteDifference, 10.0 * h * h).unwrap();
    Outcome {
        pass: worst <= TANH_ANALYTIC_TOL && fd.max_p <= 10.0 * h * h,
        detail: format!(
            "analytic max|P| = {worst:.2e} <= {TANH_ANALYTIC_TOL:e}; FD max P = {:.2e} <= 10h^2 = {:.2e}",
            fd.max_p,
            10.0 * h * h
        ),
        budget: Some(Duration::from_secs(1)),
    }
}

fn flagship() -> Outcome {
    let src = SourceModel::reaction(ScalarFn::allen_cahn());
    let lap = PhiModel::laplacian();
    let grid = Grid::periodic(2, 128, 4.0 * PI).unwrap();
    let seed = sample_field(|x| 0.5 * (x[0] / 2.0).cos(), &grid).unwrap();
    let params = SolveParams {
        pseudo_time: Some(1.0),
        ..SolveParams::default()
    };
    let out = solve_newton(&lap, &src, &SOperator::Identity, &seed, &params).unwrap();
    let residual = residual_field(&lap, &src, &SOperator::Identity, &out.field).unwrap().max_abs();
    let spread = out.field.max() - out.field.min();
    let h = grid.max_spacing();
    let gauge = build_gauge(&src, &out.field).unwrap();
    let p = p_field(&lap, &gauge, &out.field, DerivativeMode::FiniteDifference, 10.0 * h * h).unwrap();
    let lemma = lemma_residual(&lap, &src, &SOperator::Identity, &out.field, None).unwrap();
    let pass = out.converged
        && out.iterations <= FLAGSHIP_MAX_ITERS
        && residual <= FLAGSHIP_RESIDUAL
        && spread > 0.1
        && p.max_p <= 10.0 * h * h
        && lemma.min_residual >= -10.0 * h;
    Outcome {
        pass,
        detail: format!(
            "{} Newton steps, residual {residual:.2e}, max-min {spread:.3}, max P {:.2e} <= {:.2e}, lemma min {:.2e} >= {:.2e}",
            out.iterations,
            p.max_p,
            10.0 * h * h,
            lemma.min_residual,
            -10.0 * h
        ),
        budget: Some(Duration::from_secs(60)),
    }
}

fn ellipticity() -> Outcome {
    let m = 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut violations = 0;
    let mut first_family = None;
    for regime in [Regime::A, Regime::B] {
        for k in 0..FAMILIES_PER_REGIME {
            let (model, mu) = random_family(regime, &mut rng);
            let cert = match regime {
                Regime::A => constants_assumption_a(&model, mu, m),
                Regime::B => constants_assumption_b(&model, mu, m),
            }
            .unwrap();
            let checked = verify_bounds(&model, &cert, 2, ELLIPTICITY_SAMPLES, k as u64).unwrap();
            violations += checked.violation_count;
            if first_family.is_none() {
                first_family = Some((model, cert));
            }
        }
    }
    let (model, mut cert) = first_family.unwrap();
    cert.c1_phi *= 10.0;
    let inflated = verify_bounds(&model, &cert, 2, ELLIPTICITY_SAMPLES, 7).unwrap().violation_count;
    Outcome {
        pass: violations == 0 && inflated > 0,
        detail: format!(
            "{} families x {ELLIPTICITY_SAMPLES} samples: {violations} violations; 10x c1_phi: {inflated} violations",
            2 * FAMILIES_PER_REGIME
        ),
        budget: Some(Duration::from_secs(30)),
    }
}

fn remainder_signs() -> Outcome {
    let pos = |beta: f64| {
        SourceModel::new(ScalarFn::identity(), Coupling::power_drift(beta, ScalarFn::cubic_increasing()), Some(beta))
    };
    let neg = |beta: f64| {
        SourceModel::new(
            ScalarFn::identity().negate(),
            Coupling::power_drift(beta, ScalarFn::cubic_increasing()),
            Some(beta),
        )
    };
    let fam = |t: &[(f64, f64, f64)]| PhiModel::from_triples(t).unwrap();
    let instances = [
        (CaseCondition::Yau1, fam(&[(1.0, 0.5, 3.0)]), pos(2.0)),
        (CaseCondition::Yau4, fam(&[(1.0, 0.5, 2.0)]), pos(2.0)),
        (CaseCondition::Yau5, fam(&[(1.0, 0.5, 1.5)]), pos(1.0)),
        (CaseCondition::Yau2, fam(&[(1.0, 1.0, 2.0), (1.0, 1.0, 4.0)]), pos(3.0)),
        (CaseCondition::Yau3, fam(&[(1.0, 0.0, 3.0), (0.5, 0.0, 4.0)]), neg(1.5)),
        (CaseCondition::YauF, fam(&[(1.0, 0.0, 4.0)]), pos(3.0)),
    ];
    let m = 2.0;
    let mut pass = true;
    let mut parts = Vec::new();
    for (cond, family, src) in instances {
        let region = SampleBox {
            n: 2,
            zeta_radius: m,
            eta_radius: 1.0,
        };
        let verdict = classify_case(&family, &src, STATES, 11, region).unwrap();
        let beta = src.beta.unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cond as u64 + 100);
        let (mut min_rem, mut min_xi, mut max_abs_xi) = (f64::INFINITY, f64::INFINITY, 0.0f64);
        for _ in 0..STATES {
            let grad = random_unit_ball(&mut rng, 2, m);
            let u: f64 = rng.random_range(-1.0..1.0);
            let r = norm_sq(&grad);
            let rem = remainder_at(&family, &src, &SOperator::Identity, u, &grad, &[0.0, 0.0]).unwrap();
            let fg = src.f.eval(u) * src.g.eval(&grad, &[u]).value;
            let xi = xi_sign(&family, fg, r, beta).unwrap();
            min_rem = min_rem.min(rem);
            min_xi = min_xi.min(xi);
            max_abs_xi = max_abs_xi.max(xi.abs());
        }
        let ok = verdict.is_matched(cond)
            && verdict.preamble_ok
            && min_rem >= -SIGN_TOL
            && min_xi >= -SIGN_TOL
            && (cond != CaseCondition::YauF || max_abs_xi <= SIGN_TOL);
        pass &= ok;
        parts.push(format!("{cond} R>={min_rem:.1e} Xi>={min_xi:.1e}"));
    }
    Outcome {
        pass,
        detail: parts.join(", "),
        budget: None,
    }
}

fn closed_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let lap = PhiModel::laplacian();

    // constant drift: g = (c·ζ)η with Su = h(u), Φ = r
    let c = [0.7, -1.3];
    let h = ScalarFn::cubic_increasing();
    let src = SourceModel::new(ScalarFn::allen_cahn(), Coupling::constant_drift(&c), Some(1.0));
    let s = SOperator::Map(h.clone());
    let closed = |u: f64, grad: &[f64]| 2.0 * norm_sq(grad).powi(2) * dot(&c, grad) * h.deriv(u);
    let mut worst_drift: f64 = 0.0;
    for _ in 0..STATES {
        let grad = random_unit_ball(&mut rng, 2, 2.0);
        let u: f64 = rng.random_range(-1.5..1.5);
        let rem = remainder_at(&lap, &src, &s, u, &grad, &[0.0, 0.0]).unwrap();
        let expect = closed(u, &grad);
        if expect.abs() > 1e-8 {
            worst_drift = worst_drift.max(rel_err(rem, expect));
        }
    }
    // the same identity through the field path, with FD gradients
    let grid = Grid::periodic(2, 100, 2.0 * PI).unwrap();
    let field = sample_field(|x| x[0].sin() * (2.0 * x[1]).cos() + 0.3 * x[1].sin(), &grid).unwrap();
    let rem = remainder_field(&lap, &src, &s, &field, None).unwrap();
    let grads = gradient_of(&field);
    for (i, v) in rem.iter_active() {
        let expect = closed(field.values()[i], grads.get(i)[..2].as_ref());
        if expect.abs() > 1e-8 {
            worst_drift = worst_drift.max(rel_err(v, expect));
        }
    }

    // bilinear drift: g = Σζ_jη_j + η_{n+1}, Su = (c(x), h(u)), f = 0
    let field_c = Arc::new(|x: &[f64]| {
        let value = [x[0].sin() + x[1] * x[1], x[0] * x[1], 0.0];
        let mut jac = SmallMatrix::zeros(2);
        jac.set(0, 0, x[0].cos());
        jac.set(0, 1, 2.0 * x[1]);
        jac.set(1, 0, x[1]);
        jac.set(1, 1, x[0]);
        (value, jac)
    });
    let src = SourceModel::new(ScalarFn::zero(), Coupling::bilinear_drift(), None);
    let s = SOperator::DriftField {
        c: field_c.clone(),
        h: h.clone(),
    };
    let family = PhiModel::from_triples(&[(1.0, 0.3, 1.5), (0.5, 0.3, 3.0)]).unwrap();
    let mut worst_bilinear: f64 = 0.0;
    for _ in 0..STATES {
        let grad = random_unit_ball(&mut rng, 2, 2.0);
        let u: f64 = rng.random_range(-1.5..1.5);
        let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let r = norm_sq(&grad);
        let rem = remainder_at(&family, &src, &s, u, &grad, &x).unwrap();
        let (_, dc) = field_c(&x);
        let quad: f64 = (0..2)
            .flat_map(|j| (0..2).map(move |k| (j, k)))
            .map(|(j, k)| dc.get(j, k) * grad[j] * grad[k])
            .sum();
        let expect = quad + h.deriv(u) * r;
        let got = rem / (2.0 * r);
        if expect.abs() > 1e-8 {
            worst_bilinear = worst_bilinear.max(rel_err(got, expect));
        }
    }

    // Λ closed form against 2rΦ'' + Φ'
    let mut worst_lambda: f64 = 0.0;
    for _ in 0..STATES {
        let count = rng.random_range(1..=3);
        let triples: Vec<(f64, f64, f64)> = (0..count)
            .map(|_| (rng.random_range(0.1..3.0), rng.random_range(0.0..2.0), rng.random_range(1.0..6.0)))
            .collect();
        let model = PhiModel::from_triples(&triples).unwrap();
        let r = 10f64.powf(rng.random_range(-3.0..(4.0f64).log10()));
        let d = model.derivatives(r).unwrap();
        worst_lambda = worst_lambda.max(rel_err(model.lambda(r).unwrap(), 2.0 * r * d.second + d.first));
    }

    Outcome {
        pass: worst_drift <= CLOSED_FORM_REL && worst_bilinear <= CLOSED_FORM_REL && worst_lambda <= CLOSED_FORM_REL,
        detail: format!(
            "constant drift rel {worst_drift:.1e}, bilinear drift rel {worst_bilinear:.1e}, Lambda rel {worst_lambda:.1e} (<= {CLOSED_FORM_REL:e})"
        ),
        budget: None,
    }
}

fn counterexample() -> Outcome {
    let rep = counterexample_suite(3.0, 4.0, 2).unwrap();
    let pass = rep.max_rel_residual <= COUNTEREXAMPLE_REL
        && (rep.lhs_at_unit - 112.0).abs() <= 1e-9
        && (rep.ratio_slope - rep.expected_slope).abs() <= SLOPE_TOL
        && rep.f_at_zero == 0.0
        && rep.fprime_at_zero == 0.0;
    Outcome {
        pass,
        detail: format!(
            "residual {:.1e} over {} points, LHS(e1) = {:.6}, slope {:.4} vs {:.2}",
            rep.max_rel_residual, rep.points, rep.lhs_at_unit, rep.ratio_slope, rep.expected_slope
        ),
        budget: Some(Duration::from_secs(1)),
    }
}

fn psi_gamma() -> Outcome {
    let m: f64 = 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    let mut bound_finite = true;
    for k in 0..PSI_FAMILIES {
        let regime = if k % 2 == 0 { Regime::A } else { Regime::B };
        let (model, _) = random_family(regime, &mut rng);
        let inv = GammaInverse::new(&model, m * m).unwrap();
        for j in 0..200 {
            let r = m * m * 1e-8f64.powf(j as f64 / 199.0);
            let back = inv.invert(model.gamma(r).unwrap(), 1e-12).unwrap();
            worst = worst.max((back - r).abs());
        }
        bound_finite &= gamma_sqrt_bound(&model, m).is_ok_and(f64::is_finite);
    }
    Outcome {
        pass: worst <= ROUND_TRIP_TOL && bound_finite,
        detail: format!("{PSI_FAMILIES} families: max |Psi(Gamma(r)) - r| = {worst:.1e}; Gamma/sqrt(r) bound finite: {bound_finite}"),
        budget: None,
    }
}

fn rigidity() -> Outcome {
    let src = SourceModel::reaction(ScalarFn::allen_cahn());
    let lap = PhiModel::laplacian();
    let mut notes = Vec::new();
    let mut pass = true;

    for grid in [Grid::periodic(2, 16, 3.0).unwrap(), Grid::periodic(1, 32, 1.0).unwrap()] {
        for a in [1.0, -1.0] {
            let u = ScalarField::constant(grid.clone(), a).unwrap();
            let gauge = build_gauge(&src, &u).unwrap();
            let out = rigidity_check(&lap, &gauge, &u, &RigidityInput::new(a, 2.0)).unwrap();
            pass &= out.is_constant() == Some(true);
        }
    }
    notes.push("constants rigid".to_string());

    let grid = Grid::interval(-20.0, 20.0, 512).unwrap();
    let tanh = sample_field(|x| (x[0] / SQRT_2).tanh(), &grid).unwrap();
    let gauge = build_gauge(&src, &tanh).unwrap();
    let out = rigidity_check(&lap, &gauge, &tanh, &RigidityInput::new(1.0, 2.0)).unwrap();
    pass &= out.verdict == RigidityVerdict::NoTouchingPoint;
    notes.push(format!("tanh: {:?}", out.verdict));

    let grid = Grid::periodic(2, 16, 3.0).unwrap();
    let base = ScalarField::constant(grid.clone(), 1.0).unwrap();
    let gauge = build_gauge(&src, &base).unwrap();
    let mut v = base.values().to_vec();
    v[37] -= 1e-3;
    let bumped = ScalarField::new(grid, v).unwrap();
    let out = rigidity_check(&lap, &gauge, &bumped, &RigidityInput::new(1.0, 2.0)).unwrap();
    let flagged = matches!(out.verdict, RigidityVerdict::Applicable { constant: false, witness: Some(37) });
    pass &= flagged;
    notes.push(format!("perturbed: {:?}", out.verdict));

    Outcome {
        pass,
        detail: notes.join("; "),
        budget: None,
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 8] = [
        ("modica equality (tanh)", modica_equality),
        ("flagship 2D Allen-Cahn", flagship),
        ("ellipticity certificates", ellipticity),
        ("remainder sign per case", remainder_signs),
        ("closed-form cross-checks", closed_forms),
        ("sharpness counterexample", counterexample),
        ("Psi/Gamma machinery", psi_gamma),
        ("rigidity verdicts", rigidity),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.into_iter().enumerate() {
        if !run(k + 1, name, f) {
            failed += 1;
        }
    }
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
