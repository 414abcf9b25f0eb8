//! Typed run configuration built from a parsed [`Document`], with registry
//! lookups for the operator, the sources and the initial field.

use std::path::PathBuf;

use modica_core::ellipticity::Regime;
use modica_core::fields::{Grid, Topology};
use modica_core::solver::{JacobianKind, PreconditionerKind, SolveParams};
use modica_core::sources::{CaseCondition, Coupling, SOperator, ScalarFn, SourceModel};
use modica_core::PhiModel;

use crate::config::{parse_call, parse_number, split_list, Call, Document, Entry, Pos};
use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Check {
    Ellipticity,
    Solve,
    Bound,
    Lemma,
    Remainder,
    Case,
    Rigidity,
    Counterexample,
}

impl Check {
    /// Dependency order.
    pub const ALL: [Check; 8] = [
        Check::Ellipticity,
        Check::Solve,
        Check::Bound,
        Check::Lemma,
        Check::Remainder,
        Check::Case,
        Check::Rigidity,
        Check::Counterexample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Ellipticity => "ellipticity",
            Check::Solve => "solve",
            Check::Bound => "bound",
            Check::Lemma => "lemma",
            Check::Remainder => "remainder",
            Check::Case => "case",
            Check::Rigidity => "rigidity",
            Check::Counterexample => "counterexample",
        }
    }

    pub fn parse(s: &str) -> Option<Check> {
        Check::ALL.into_iter().find(|c| c.name() == s)
    }

    /// Checks that evaluate something on the solution field.
    pub fn needs_field(self) -> bool {
        matches!(self, Check::Bound | Check::Lemma | Check::Remainder | Check::Rigidity)
    }
}

/// Where the field for the field checks comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldSource {
    Solve,
    /// `tanh(x/√2)` on a 1D clamped grid, with analytic derivatives.
    Tanh,
    Constant(f64),
    /// The `initial` field itself, unsolved; for pointwise checks.
    Initial,
}

/// Starting guess for the solver.
#[derive(Clone, Debug, PartialEq)]
pub enum Initial {
    /// `amplitude · cos(k x₀)`.
    Cosine { amplitude: f64, k: f64 },
    Constant(f64),
    Tanh,
    /// Uniform noise in `[−amplitude, amplitude]`, drawn from the run seed.
    Random { amplitude: f64 },
}

#[derive(Clone, Debug)]
pub struct EllipticityConfig {
    pub regime: Regime,
    pub mu: f64,
    pub m: f64,
    pub samples: usize,
    pub n: usize,
    pub c1_phi_scale: f64,
}

#[derive(Clone, Debug)]
pub struct Tolerances {
    /// Multiple of `h²` allowed for `max P` with finite-difference gradients.
    pub bound: f64,
    /// Absolute allowance for `max P` with analytic gradients.
    pub analytic_bound: f64,
    /// Multiple of `h` allowed below zero for the differential inequality.
    pub lemma: f64,
    pub remainder: f64,
}

#[derive(Clone, Debug)]
pub struct CaseConfig {
    pub samples: usize,
    pub zeta_radius: f64,
    pub eta_radius: f64,
    pub expect: Option<CaseCondition>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RigidityExpect {
    Constant,
    Nonconstant,
    NoTouchingPoint,
}

#[derive(Clone, Debug)]
pub struct RigidityConfig {
    pub r0: f64,
    pub p_hat: f64,
    pub expect: Option<RigidityExpect>,
}

#[derive(Clone, Debug)]
pub struct CounterexampleConfig {
    pub p: f64,
    pub beta: f64,
    pub n: usize,
    pub residual_tol: f64,
    pub slope_tol: f64,
}

pub struct RunConfig {
    pub checks: Vec<Check>,
    pub seed: u64,
    pub out: PathBuf,
    pub grid: Option<Grid>,
    pub model: PhiModel,
    pub src: SourceModel,
    pub s: SOperator,
    pub field: FieldSource,
    pub initial: Initial,
    pub solver: SolveParams,
    pub ellipticity: EllipticityConfig,
    pub tolerances: Tolerances,
    pub case: CaseConfig,
    pub rigidity: RigidityConfig,
    pub counterexample: CounterexampleConfig,
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub tol_scale: Option<f64>,
    pub checks: Option<Vec<Check>>,
}

fn call_at(doc: &Document, e: &Entry) -> Result<Call, CliError> {
    parse_call(&e.value).map_err(|(off, msg)| doc.error_at(shift(e.value_pos, off), msg))
}

fn shift(pos: Pos, chars: usize) -> Pos {
    Pos {
        line: pos.line,
        col: pos.col + chars,
    }
}

fn arity(doc: &Document, e: &Entry, call: &Call, allowed: &[usize]) -> Result<(), CliError> {
    if allowed.contains(&call.args.len()) {
        Ok(())
    } else {
        Err(doc.error_at(
            e.value_pos,
            format!("`{}` takes {:?} arguments, got {}", call.name, allowed, call.args.len()),
        ))
    }
}

fn scalar_fn(doc: &Document, e: &Entry) -> Result<ScalarFn, CliError> {
    let call = call_at(doc, e)?;
    let base = match call.name.as_str() {
        "allen_cahn" => ScalarFn::allen_cahn(),
        "zero" => ScalarFn::zero(),
        "identity" => ScalarFn::identity(),
        "exp" => ScalarFn::exp(),
        "cube" => ScalarFn::cube(),
        "cubic_increasing" => ScalarFn::cubic_increasing(),
        "linear" => {
            arity(doc, e, &call, &[1])?;
            ScalarFn::linear(call.args[0])
        }
        other => {
            return Err(doc.error_at(
                e.value_pos,
                format!("unknown function `{other}` (allen_cahn, zero, identity, exp, cube, cubic_increasing, linear(λ))"),
            ))
        }
    };
    if call.name != "linear" {
        arity(doc, e, &call, &[0])?;
    }
    Ok(if call.negate { base.negate() } else { base })
}

fn phi_model(doc: &Document) -> Result<PhiModel, CliError> {
    let Some(e) = doc.get("problem", "phi") else {
        return Ok(PhiModel::laplacian());
    };
    if e.value == "laplacian" {
        return Ok(PhiModel::laplacian());
    }
    let mut triples = Vec::new();
    for (off, item) in split_list(&e.value) {
        let nums: Option<Vec<f64>> = item.split_whitespace().map(parse_number).collect();
        match nums.as_deref() {
            Some(&[c, b, p]) => triples.push((c, b, p)),
            _ => return Err(doc.error_at(shift(e.value_pos, off), format!("expected `c b p`, got `{item}`"))),
        }
    }
    PhiModel::from_triples(&triples).map_err(|err| doc.error_at(e.value_pos, err.to_string()))
}

fn grid(doc: &Document) -> Result<Option<Grid>, CliError> {
    if !doc.sections.contains_key("problem") {
        return Ok(None);
    }
    let dim = doc.integer_or("problem", "dim", 1)? as usize;
    if !(1..=3).contains(&dim) {
        let pos = doc.get("problem", "dim").map(|e| e.value_pos).unwrap();
        return Err(doc.error_at(pos, format!("dim must be 1, 2 or 3, got {dim}")));
    }
    let points = doc.integer("problem", "points")?.ok_or_else(|| doc.missing("problem", "points"))? as usize;
    let length = doc.required_number("problem", "length")?;
    let topology = match doc.get("problem", "topology") {
        None => Topology::Periodic,
        Some(e) => match e.value.as_str() {
            "periodic" => Topology::Periodic,
            "clamped" => Topology::Clamped,
            other => return Err(doc.error_at(e.value_pos, format!("topology must be periodic or clamped, got `{other}`"))),
        },
    };
    let origin = match doc.get("problem", "origin") {
        None => vec![0.0; dim],
        Some(e) => {
            let items = split_list(&e.value);
            let mut v = Vec::new();
            for (off, item) in &items {
                v.push(
                    parse_number(item)
                        .ok_or_else(|| doc.error_at(shift(e.value_pos, *off), format!("`{item}` is not a number")))?,
                );
            }
            match v.len() {
                1 => vec![v[0]; dim],
                n if n == dim => v,
                n => return Err(doc.error_at(e.value_pos, format!("origin has {n} entries for dim {dim}"))),
            }
        }
    };
    let pos = doc.sections["problem"].pos;
    Grid::new(&vec![points; dim], &vec![length; dim], &origin, topology)
        .map(Some)
        .map_err(|err| doc.error_at(pos, err.to_string()))
}

fn sources(doc: &Document, dim: usize) -> Result<(SourceModel, SOperator), CliError> {
    let f = match doc.get("problem", "f") {
        Some(e) => scalar_fn(doc, e)?,
        None => ScalarFn::allen_cahn(),
    };
    let h = match doc.get("problem", "h") {
        Some(e) => Some(scalar_fn(doc, e)?),
        None => None,
    };
    let need_h = |what: &str| -> Result<ScalarFn, CliError> {
        h.clone().ok_or_else(|| doc.missing("problem", &format!("h (required by {what})")))
    };
    let beta = doc.number("problem", "beta")?;
    let g = match doc.get("problem", "g") {
        None => Coupling::zero(),
        Some(e) => {
            let call = call_at(doc, e)?;
            if call.negate {
                return Err(doc.error_at(e.value_pos, "couplings cannot be negated; negate f instead"));
            }
            match call.name.as_str() {
                "zero" => {
                    arity(doc, e, &call, &[0])?;
                    Coupling::zero()
                }
                "power_drift" => {
                    arity(doc, e, &call, &[1])?;
                    Coupling::power_drift(call.args[0], need_h("power_drift")?)
                }
                "bilinear_drift" => {
                    arity(doc, e, &call, &[0])?;
                    Coupling::bilinear_drift()
                }
                "constant_drift" => {
                    arity(doc, e, &call, &[dim])?;
                    Coupling::constant_drift(&call.args)
                }
                other => {
                    return Err(doc.error_at(
                        e.value_pos,
                        format!("unknown coupling `{other}` (zero, power_drift(β), bilinear_drift, constant_drift(c…))"),
                    ))
                }
            }
        }
    };
    let s = match doc.get("problem", "s") {
        None => SOperator::Identity,
        Some(e) => {
            let call = call_at(doc, e)?;
            match call.name.as_str() {
                "identity" => SOperator::Identity,
                "power_u" => {
                    arity(doc, e, &call, &[1])?;
                    SOperator::power_u(call.args[0]).map_err(|err| doc.error_at(e.value_pos, err.to_string()))?
                }
                "map" => SOperator::Map(need_h("s = map")?),
                "constant_drift" => {
                    arity(doc, e, &call, &[dim])?;
                    let mut c = [0.0; 3];
                    c[..dim].copy_from_slice(&call.args);
                    SOperator::ConstantDrift {
                        c,
                        h: need_h("s = constant_drift")?,
                    }
                }
                other => {
                    return Err(doc.error_at(
                        e.value_pos,
                        format!("unknown operator `{other}` (identity, power_u(q), map, constant_drift(c…))"),
                    ))
                }
            }
        }
    };
    if !g.eta_dim().accepts(dim, s.eta_dim(dim)) {
        let pos = doc.get("problem", "s").or(doc.get("problem", "g")).map(|e| e.value_pos).unwrap_or(Pos { line: 1, col: 1 });
        return Err(doc.error_at(pos, format!("coupling `{}` does not accept the output of S = {s:?}", g.name())));
    }
    Ok((SourceModel::new(f, g, beta), s))
}

fn field_source(doc: &Document) -> Result<(FieldSource, Initial), CliError> {
    let source = match doc.get("field", "source") {
        None => FieldSource::Solve,
        Some(e) => match e.value.as_str() {
            "solve" => FieldSource::Solve,
            "tanh" => FieldSource::Tanh,
            "constant" => FieldSource::Constant(doc.required_number("field", "value")?),
            "initial" => FieldSource::Initial,
            other => {
                return Err(doc.error_at(
                    e.value_pos,
                    format!("field source must be solve, tanh, constant or initial, got `{other}`"),
                ))
            }
        },
    };
    let initial = match doc.get("field", "initial") {
        None => Initial::Constant(0.0),
        Some(e) => {
            let call = call_at(doc, e)?;
            match call.name.as_str() {
                "cosine" => {
                    arity(doc, e, &call, &[2])?;
                    Initial::Cosine {
                        amplitude: call.args[0],
                        k: call.args[1],
                    }
                }
                "constant" => {
                    arity(doc, e, &call, &[1])?;
                    Initial::Constant(call.args[0])
                }
                "tanh" => Initial::Tanh,
                "random" => {
                    arity(doc, e, &call, &[1])?;
                    Initial::Random { amplitude: call.args[0] }
                }
                other => {
                    return Err(doc.error_at(
                        e.value_pos,
                        format!("unknown initial field `{other}` (cosine(a, k), constant(a), tanh, random(a))"),
                    ))
                }
            }
        }
    };
    Ok((source, initial))
}

fn solver(doc: &Document) -> Result<SolveParams, CliError> {
    let d = SolveParams::default();
    let jacobian = match doc.get("solver", "jacobian") {
        None => d.jacobian,
        Some(e) => match e.value.as_str() {
            "numeric" => JacobianKind::NumericColored,
            "picard" => JacobianKind::Picard,
            other => return Err(doc.error_at(e.value_pos, format!("jacobian must be numeric or picard, got `{other}`"))),
        },
    };
    let preconditioner = match doc.get("solver", "preconditioner") {
        None => d.preconditioner,
        Some(e) => match e.value.as_str() {
            "ilu0" => PreconditionerKind::Ilu0,
            "jacobi" => PreconditionerKind::Jacobi,
            other => return Err(doc.error_at(e.value_pos, format!("preconditioner must be ilu0 or jacobi, got `{other}`"))),
        },
    };
    Ok(SolveParams {
        max_iters: doc.integer_or("solver", "max_iters", d.max_iters as u64)? as usize,
        tol: doc.number_or("solver", "tol", d.tol)?,
        damping: doc.number_or("solver", "damping", d.damping)?,
        jacobian,
        preconditioner,
        linear_tol: doc.number_or("solver", "linear_tol", d.linear_tol)?,
        restart: doc.integer_or("solver", "restart", d.restart as u64)? as usize,
        max_linear_iters: doc.integer_or("solver", "max_linear_iters", d.max_linear_iters as u64)? as usize,
        gradient_cap: doc.number("solver", "gradient_cap")?.or(d.gradient_cap),
        pseudo_time: doc.number("solver", "pseudo_time")?.or(d.pseudo_time),
    })
}

impl RunConfig {
    pub fn from_document(doc: &Document, ov: &Overrides) -> Result<Self, CliError> {
        let grid = grid(doc)?;
        let dim = grid.as_ref().map_or(2, Grid::dim);
        let model = phi_model(doc)?;
        let (src, s) = sources(doc, dim)?;
        let (field, initial) = field_source(doc)?;
        let scale = ov.tol_scale.unwrap_or(1.0);

        let checks = match &ov.checks {
            Some(c) => c.clone(),
            None => {
                let e = doc.get("run", "checks").ok_or_else(|| doc.missing("run", "checks"))?;
                let mut out = Vec::new();
                for (off, item) in split_list(&e.value) {
                    let c = Check::parse(item).ok_or_else(|| {
                        doc.error_at(shift(e.value_pos, off), format!("unknown check `{item}`"))
                    })?;
                    out.push(c);
                }
                out
            }
        };
        let mut checks: Vec<Check> = checks;
        checks.sort();
        checks.dedup();

        let regime = match doc.get("ellipticity", "regime") {
            None => Regime::A,
            Some(e) => match e.value.as_str() {
                "A" | "a" => Regime::A,
                "B" | "b" => Regime::B,
                other => return Err(doc.error_at(e.value_pos, format!("regime must be A or B, got `{other}`"))),
            },
        };
        let expect_case = match doc.get("case", "expect") {
            None => None,
            Some(e) => Some(
                CaseCondition::ALL
                    .into_iter()
                    .find(|c| c.label().eq_ignore_ascii_case(&e.value))
                    .ok_or_else(|| doc.error_at(e.value_pos, format!("unknown case condition `{}`", e.value)))?,
            ),
        };
        let expect_rigidity = match doc.get("rigidity", "expect") {
            None => None,
            Some(e) => Some(match e.value.as_str() {
                "constant" => RigidityExpect::Constant,
                "nonconstant" => RigidityExpect::Nonconstant,
                "no_touching_point" => RigidityExpect::NoTouchingPoint,
                other => {
                    return Err(doc.error_at(
                        e.value_pos,
                        format!("rigidity expect must be constant, nonconstant or no_touching_point, got `{other}`"),
                    ))
                }
            }),
        };

        let cfg = RunConfig {
            checks,
            seed: match ov.seed {
                Some(s) => s,
                None => doc.integer_or("run", "seed", 0)?,
            },
            out: match &ov.out {
                Some(p) => p.clone(),
                None => PathBuf::from(doc.text("run", "out").unwrap_or("out")),
            },
            grid,
            model,
            src,
            s,
            field,
            initial,
            solver: solver(doc)?,
            ellipticity: EllipticityConfig {
                regime,
                mu: doc.number_or("ellipticity", "mu", 0.5)?,
                m: doc.number_or("ellipticity", "m", 2.0)?,
                samples: doc.integer_or("ellipticity", "samples", 100_000)? as usize,
                n: doc.integer_or("ellipticity", "n", dim as u64)? as usize,
                c1_phi_scale: doc.number_or("ellipticity", "c1_phi_scale", 1.0)?,
            },
            tolerances: Tolerances {
                bound: scale * doc.number_or("tolerances", "bound", 10.0)?,
                analytic_bound: scale * doc.number_or("tolerances", "analytic_bound", 1e-10)?,
                lemma: scale * doc.number_or("tolerances", "lemma", 10.0)?,
                remainder: scale * doc.number_or("tolerances", "remainder", 1e-12)?,
            },
            case: CaseConfig {
                samples: doc.integer_or("case", "samples", 10_000)? as usize,
                zeta_radius: doc.number_or("case", "zeta_radius", 1.0)?,
                eta_radius: doc.number_or("case", "eta_radius", 1.0)?,
                expect: expect_case,
            },
            rigidity: RigidityConfig {
                r0: doc.number_or("rigidity", "r0", 1.0)?,
                p_hat: doc.number_or("rigidity", "p_hat", 2.0)?,
                expect: expect_rigidity,
            },
            counterexample: CounterexampleConfig {
                p: doc.number_or("counterexample", "p", 3.0)?,
                beta: doc.number_or("counterexample", "beta", 4.0)?,
                n: doc.integer_or("counterexample", "n", 2)? as usize,
                residual_tol: scale * doc.number_or("counterexample", "residual_tol", 1e-8)?,
                slope_tol: scale * doc.number_or("counterexample", "slope_tol", 0.05)?,
            },
        };
        cfg.validate(doc)?;
        Ok(cfg)
    }

    fn validate(&self, doc: &Document) -> Result<(), CliError> {
        let checks_pos = doc
            .get("run", "checks")
            .map(|e| e.value_pos)
            .unwrap_or(Pos { line: 1, col: 1 });
        let wants_field = self.checks.iter().any(|c| c.needs_field());
        if (wants_field || self.checks.contains(&Check::Solve)) && self.grid.is_none() {
            return Err(doc.error_at(checks_pos, "field checks need a [problem] section with a grid"));
        }
        if wants_field && self.field == FieldSource::Solve && !self.checks.contains(&Check::Solve) {
            let names: Vec<_> = self.checks.iter().filter(|c| c.needs_field()).map(|c| c.name()).collect();
            return Err(doc.error_at(
                checks_pos,
                format!("{} need a solution: add `solve` to the checks or set [field] source", names.join(", ")),
            ));
        }
        if let Some(grid) = &self.grid {
            let tanh_needed = self.field == FieldSource::Tanh || (self.checks.contains(&Check::Solve) && self.initial == Initial::Tanh);
            if tanh_needed && (grid.dim() != 1 || grid.is_periodic()) {
                let pos = doc.get("field", "source").or(doc.get("field", "initial")).map_or(checks_pos, |e| e.value_pos);
                return Err(doc.error_at(pos, "tanh fields need a 1D clamped grid"));
            }
        }
        if self.checks.contains(&Check::Ellipticity) && self.model.terms().is_none() {
            return Err(doc.error_at(checks_pos, "ellipticity constants need a power-family phi"));
        }
        Ok(())
    }
}
