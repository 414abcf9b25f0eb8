//! Executes the configured checks in dependency order and turns each result
//! into a [`Record`].

use modica_core::ellipticity::{constants_assumption_a, constants_assumption_b, verify_bounds, Regime};
use modica_core::fields::{sample_field, write_field, Grid, MaskedField, ScalarField};
use modica_core::pfunc::{
    build_gauge, counterexample_suite, lemma_residual, p_field, remainder_field, remainder_lower_bound_check,
    rigidity_check, DerivativeMode, RigidityInput, RigidityVerdict,
};
use modica_core::solver::{solve_newton, tanh_heteroclinic, GradientFn};
use modica_core::sources::{classify_case, CaseCondition, SOperator, SampleBox};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::problem::{Check, FieldSource, Initial, RigidityExpect, RunConfig};
use crate::report::{Record, Table, Value};

/// The field the field checks run on, with analytic gradients when known.
struct Subject {
    field: ScalarField,
    gradient: Option<GradientFn>,
}

fn fail(rec: &mut Record, err: impl std::fmt::Display) {
    rec.pass = false;
    rec.text("error", err.to_string());
}

fn coord_header(grid: &Grid, value: &str) -> Vec<String> {
    let mut h: Vec<String> = (0..grid.dim()).map(|k| format!("x{k}")).collect();
    h.push(value.to_string());
    h
}

fn masked_table(m: &MaskedField, value: &str) -> Table {
    let grid = m.grid();
    let mut t = Table {
        header: coord_header(grid, value),
        rows: Vec::new(),
    };
    for (i, v) in m.iter_active() {
        let x = grid.coord(i);
        let mut row = x[..grid.dim()].to_vec();
        row.push(v);
        t.push_nums(&row);
    }
    t
}

fn initial_field(cfg: &RunConfig, grid: &Grid) -> modica_core::Result<ScalarField> {
    match cfg.initial {
        Initial::Cosine { amplitude, k } => sample_field(|x| amplitude * (k * x[0]).cos(), grid),
        Initial::Constant(a) => ScalarField::constant(grid.clone(), a),
        Initial::Tanh => tanh_heteroclinic(grid).map(|s| s.field),
        Initial::Random { amplitude } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let values = (0..grid.len()).map(|_| amplitude * rng.random_range(-1.0..=1.0)).collect();
            ScalarField::new(grid.clone(), values)
        }
    }
}

fn ellipticity(cfg: &RunConfig) -> Record {
    let mut rec = Record::new("ellipticity");
    let e = &cfg.ellipticity;
    let cert = match e.regime {
        Regime::A => constants_assumption_a(&cfg.model, e.mu, e.m),
        Regime::B => constants_assumption_b(&cfg.model, e.mu, e.m),
    };
    let mut cert = match cert {
        Ok(c) => c,
        Err(err) => {
            fail(&mut rec, err);
            return rec;
        }
    };
    cert.c1_phi *= e.c1_phi_scale;
    let checked = match verify_bounds(&cfg.model, &cert, e.n, e.samples, cfg.seed) {
        Ok(c) => c,
        Err(err) => {
            fail(&mut rec, err);
            return rec;
        }
    };
    rec.text("regime", checked.regime.name())
        .num("p", checked.p)
        .num("a", checked.a)
        .num("M", checked.m)
        .num("mu", checked.mu)
        .num("c1_phi", checked.c1_phi)
        .num("c2_phi", checked.c2_phi)
        .num("c1_form", checked.c1_form)
        .num("c2_form", checked.c2_form)
        .num("c1_phi_scale", e.c1_phi_scale)
        .int("n", e.n)
        .int("samples", e.samples)
        .int("violations", checked.violation_count);
    let n = e.n;
    let mut table = Table::new(&[]);
    table.header = (0..n)
        .map(|k| format!("sigma{k}"))
        .chain((0..n).map(|k| format!("xi{k}")))
        .chain(["bound", "value", "limit"].map(String::from))
        .collect();
    let mut witnesses = Vec::new();
    for w in &checked.witnesses {
        let bound = format!("{:?}", w.bound);
        witnesses.push(Value::Object(vec![
            ("bound".into(), Value::Str(bound.clone())),
            ("sigma".into(), Value::List(w.sigma[..n].iter().map(|v| Value::Num(*v)).collect())),
            ("xi".into(), Value::List(w.xi[..n].iter().map(|v| Value::Num(*v)).collect())),
            ("value".into(), Value::Num(w.value)),
            ("limit".into(), Value::Num(w.limit)),
        ]));
        let mut row: Vec<String> = w.sigma[..n].iter().chain(&w.xi[..n]).map(|v| format!("{v:.16e}")).collect();
        row.push(bound);
        row.push(format!("{:.16e}", w.value));
        row.push(format!("{:.16e}", w.limit));
        table.rows.push(row);
    }
    rec.value("witnesses", Value::List(witnesses));
    rec.table = Some(table);
    rec.pass = checked.passed();
    rec
}

fn solve(cfg: &RunConfig, grid: &Grid) -> (Record, Option<Subject>) {
    let mut rec = Record::new("solve");
    let seed = match initial_field(cfg, grid) {
        Ok(f) => f,
        Err(err) => {
            fail(&mut rec, err);
            return (rec, None);
        }
    };
    let out = match solve_newton(&cfg.model, &cfg.src, &cfg.s, &seed, &cfg.solver) {
        Ok(o) => o,
        Err(err) => {
            fail(&mut rec, err);
            return (rec, None);
        }
    };
    rec.int("iterations", out.iterations)
        .num("residual", out.residual_norm)
        .num("tol", cfg.solver.tol)
        .flag("converged", out.converged)
        .num("min", out.field.min())
        .num("max", out.field.max())
        .int("linear_iterations", out.linear_iterations.iter().sum())
        .value("warnings", Value::List(out.warnings.iter().cloned().map(Value::Str).collect()));
    let mut table = Table::new(&["iteration", "residual", "linear_iterations"]);
    for (k, r) in out.history.iter().enumerate() {
        let lin = if k == 0 { 0 } else { out.linear_iterations.get(k - 1).copied().unwrap_or(0) };
        table.rows.push(vec![k.to_string(), format!("{r:.16e}"), lin.to_string()]);
    }
    rec.table = Some(table);
    let mut bytes = Vec::new();
    match write_field(&out.field, &mut bytes) {
        Ok(()) => rec.blobs.push(("solution.bin".into(), bytes)),
        Err(err) => fail(&mut rec, err),
    }
    rec.pass = out.converged && out.residual_norm <= cfg.solver.tol && !rec.fields.iter().any(|(k, _)| k == "error");
    (
        rec,
        Some(Subject {
            field: out.field,
            gradient: None,
        }),
    )
}

fn bound(cfg: &RunConfig, subject: &Subject) -> Record {
    let mut rec = Record::new("bound");
    let field = &subject.field;
    let h = field.grid().max_spacing();
    let gauge = match build_gauge(&cfg.src, field) {
        Ok(g) => g,
        Err(err) => {
            fail(&mut rec, err);
            return rec;
        }
    };
    let (mode, tol, kind) = match &subject.gradient {
        Some(g) => (DerivativeMode::Analytic(&**g), cfg.tolerances.analytic_bound, "analytic"),
        None => (DerivativeMode::FiniteDifference, cfg.tolerances.bound * h * h, "finite_difference"),
    };
    let rep = match p_field(&cfg.model, &gauge, field, mode, tol) {
        Ok(r) => r,
        Err(err) => {
            fail(&mut rec, err);
            return rec;
        }
    };
    rec.num("max_p", rep.max_p)
        .num("tol", tol)
        .num("h", h)
        .text("derivatives", kind)
        .num("c_u", gauge.c_u())
        .int("admissible", rep.values.active_count())
        .int("violations", rep.violation_count);
    if let Some(i) = rep.argmax {
        rec.int("argmax", i);
    }
    rec.table = Some(masked_table(&rep.values, "P"));
    rec.pass = rep.passed();
    rec
}

fn lemma(cfg: &RunConfig, subject: &Subject) -> Record {
    let mut rec = Record::new("lemma");
    let rep = match lemma_residual(&cfg.model, &cfg.src, &cfg.s, &subject.field, None) {
        Ok(r) => r,
        Err(err) => {
            fail(&mut rec, err);
            return rec;
        }
    };
    let floor = -cfg.tolerances.lemma * rep.h;
    rec.num("min_residual", rep.min_residual)
        .num("floor", floor)
        .num("delta", rep.delta)
        .num("h", rep.h)
        .num("pde_residual", rep.pde_residual)
        .int("active", rep.residual.active_count())
        .value("warnings", Value::List(rep.warnings.iter().cloned().map(Value::Str).collect()));
    if let Some(i) = rep.argmin {
        rec.int("argmin", i);
    }
    rec.table = Some(masked_table(&rep.residual, "residual"));
    rec.pass = rep.min_residual >= floor;
    if rep.residual.active_count() == 0 {
        fail(&mut rec, "no nodes with |grad u| > delta");
    }
    rec
}

fn remainder(cfg: &RunConfig, subject: &Subject) -> Record {
    let mut rec = Record::new("remainder");
    let rem = match remainder_field(&cfg.model, &cfg.src, &cfg.s, &subject.field, None) {
        Ok(r) => r,
        Err(err) => {
            fail(&mut rec, err);
            return rec;
        }
    };
    let min = rem.argmin().map_or(f64::INFINITY, |(_, v)| v);
    let floor = -cfg.tolerances.remainder;
    rec.num("min_remainder", min).num("floor", floor).int("active", rem.active_count());
    let mut pass = min >= floor;
    if cfg.src.beta.is_some() && matches!(cfg.s, SOperator::Identity) {
        match remainder_lower_bound_check(&cfg.model, &cfg.src, &subject.field, None) {
            Ok(lb) => {
                rec.num("lower_bound_gap", lb.min_gap).int("lower_bound_checked", lb.checked);
                pass &= lb.passed;
            }
            Err(err) => {
                fail(&mut rec, err);
                pass = false;
            }
        }
    }
    rec.table = Some(masked_table(&rem, "remainder"));
    rec.pass = pass;
    if rem.active_count() == 0 {
        fail(&mut rec, "no nodes with |grad u| > delta");
    }
    rec
}

fn case(cfg: &RunConfig) -> Record {
    let mut rec = Record::new("case");
    let region = SampleBox {
        n: cfg.grid.as_ref().map_or(2, Grid::dim),
        zeta_radius: cfg.case.zeta_radius,
        eta_radius: cfg.case.eta_radius,
    };
    let verdict = match classify_case(&cfg.model, &cfg.src, cfg.case.samples, cfg.seed, region) {
        Ok(v) => v,
        Err(err) => {
            fail(&mut rec, err);
            return rec;
        }
    };
    rec.value(
        "matched",
        Value::List(verdict.matched.iter().map(|c| Value::Str(c.label().into())).collect()),
    )
    .num("min_fg", verdict.min_fg)
    .num("max_fg", verdict.max_fg)
    .flag("preamble_ok", verdict.preamble_ok)
    .value("notes", Value::List(verdict.notes.iter().cloned().map(Value::Str).collect()));
    if let Some(c) = cfg.case.expect {
        rec.text("expect", c.label());
    }
    let mut table = Table::new(&["condition", "matched"]);
    for c in CaseCondition::ALL {
        table.rows.push(vec![c.label().into(), verdict.is_matched(c).to_string()]);
    }
    rec.table = Some(table);
    rec.pass = match cfg.case.expect {
        Some(c) => verdict.is_matched(c),
        None => !verdict.matched.is_empty(),
    };
    rec
}

fn rigidity(cfg: &RunConfig, subject: &Subject) -> Record {
    let mut rec = Record::new("rigidity");
    let gauge = match build_gauge(&cfg.src, &subject.field) {
        Ok(g) => g,
        Err(err) => {
            fail(&mut rec, err);
            return rec;
        }
    };
    let input = RigidityInput::new(cfg.rigidity.r0, cfg.rigidity.p_hat);
    let out = match rigidity_check(&cfg.model, &gauge, &subject.field, &input) {
        Ok(o) => o,
        Err(err) => {
            fail(&mut rec, err);
            return rec;
        }
    };
    let verdict = match &out.verdict {
        RigidityVerdict::Applicable { constant: true, .. } => "constant",
        RigidityVerdict::Applicable { constant: false, .. } => "nonconstant",
        RigidityVerdict::NoTouchingPoint => "no_touching_point",
        RigidityVerdict::HypothesesFailed(_) => "hypotheses_failed",
    };
    rec.text("verdict", verdict);
    match &out.verdict {
        RigidityVerdict::Applicable { witness: Some(w), .. } => {
            rec.int("witness", *w);
        }
        RigidityVerdict::HypothesesFailed(why) => {
            rec.text("reason", why.clone());
        }
        _ => {}
    }
    rec.num("r0", cfg.rigidity.r0)
        .num("p_hat", cfg.rigidity.p_hat)
        .num("c0", out.c0)
        .num("epsilon", out.epsilon)
        .num("gronwall_constant", out.gronwall_constant)
        .num("ratio_slope", out.ratio_slope);
    let mut table = Table::new(&["rho", "ratio"]);
    for (rho, ratio) in &out.ratios {
        table.push_nums(&[*rho, *ratio]);
    }
    rec.table = Some(table);
    rec.pass = match cfg.rigidity.expect {
        Some(RigidityExpect::Constant) => verdict == "constant",
        Some(RigidityExpect::Nonconstant) => verdict == "nonconstant",
        Some(RigidityExpect::NoTouchingPoint) => verdict == "no_touching_point",
        None => matches!(verdict, "constant" | "no_touching_point"),
    };
    if let Some(e) = cfg.rigidity.expect {
        rec.text(
            "expect",
            match e {
                RigidityExpect::Constant => "constant",
                RigidityExpect::Nonconstant => "nonconstant",
                RigidityExpect::NoTouchingPoint => "no_touching_point",
            },
        );
    }
    rec
}

fn counterexample(cfg: &RunConfig) -> Record {
    let mut rec = Record::new("counterexample");
    let c = &cfg.counterexample;
    let rep = match counterexample_suite(c.p, c.beta, c.n) {
        Ok(r) => r,
        Err(err) => {
            fail(&mut rec, err);
            return rec;
        }
    };
    rec.num("p", rep.p)
        .num("beta", rep.beta)
        .int("n", rep.n)
        .num("max_rel_residual", rep.max_rel_residual)
        .num("residual_tol", c.residual_tol)
        .int("points", rep.points)
        .num("lhs_at_unit", rep.lhs_at_unit)
        .num("fprime_at_unit", rep.fprime_at_unit)
        .num("slope", rep.ratio_slope)
        .num("expected_slope", rep.expected_slope)
        .num("slope_tol", c.slope_tol)
        .num("f_at_zero", rep.f_at_zero)
        .num("fprime_at_zero", rep.fprime_at_zero)
        .num("primitive_mismatch", rep.primitive_mismatch);
    let mut table = Table::new(&["quantity", "value"]);
    for (k, v) in &rec.fields {
        if let Value::Num(x) = v {
            table.rows.push(vec![k.clone(), format!("{x:.16e}")]);
        }
    }
    rec.table = Some(table);
    rec.pass = rep.max_rel_residual <= c.residual_tol && (rep.ratio_slope - rep.expected_slope).abs() <= c.slope_tol;
    rec
}

/// Runs every configured check; `progress` is called after each one.
pub fn run_checks(cfg: &RunConfig, mut progress: impl FnMut(&Record)) -> Vec<Record> {
    let mut records = Vec::new();
    let mut subject: Option<Subject> = None;
    let mut push = |rec: Record, records: &mut Vec<Record>| {
        progress(&rec);
        records.push(rec);
    };
    if let Some(grid) = &cfg.grid {
        subject = match &cfg.field {
            FieldSource::Solve => None,
            FieldSource::Tanh => tanh_heteroclinic(grid).ok().map(|s| Subject {
                field: s.field,
                gradient: Some(s.gradient),
            }),
            FieldSource::Constant(a) => ScalarField::constant(grid.clone(), *a).ok().map(|field| Subject {
                field,
                gradient: None,
            }),
            FieldSource::Initial => initial_field(cfg, grid).ok().map(|field| Subject { field, gradient: None }),
        };
    }
    for &check in &cfg.checks {
        let rec = match check {
            Check::Ellipticity => ellipticity(cfg),
            Check::Solve => {
                let grid = cfg.grid.as_ref().expect("validated: solve has a grid");
                let (rec, solved) = solve(cfg, grid);
                if cfg.field == FieldSource::Solve {
                    subject = solved;
                }
                rec
            }
            Check::Case => case(cfg),
            Check::Counterexample => counterexample(cfg),
            field_check => match &subject {
                None => {
                    let mut rec = Record::new(field_check.name());
                    fail(&mut rec, "no field available: the solve step failed");
                    rec
                }
                Some(sub) => match field_check {
                    Check::Bound => bound(cfg, sub),
                    Check::Lemma => lemma(cfg, sub),
                    Check::Remainder => remainder(cfg, sub),
                    Check::Rigidity => rigidity(cfg, sub),
                    _ => unreachable!("non-field checks handled above"),
                },
            },
        };
        push(rec, &mut records);
    }
    records
}
