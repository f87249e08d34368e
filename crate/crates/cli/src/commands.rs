//! One function per subcommand. Each returns the rendered document.

use nalgebra::DMatrix;
use num_complex::Complex64;
use polset_core::bichar::{integrate_strip, parallel_transport, RelationParams};
use polset_core::geometry::{PhasePoint, SpacetimeModel};
use polset_core::nhop::weitzenboeck_extract;
use polset_core::ode::StepControl;
use polset_core::polsets::{fibre_ep, fibre_ep_pm, in_r, CorollaryReport, PolFibre, RelationPoint, Sign, Verdict};
use polset_core::symbols::PolySymbol;
use polset_core::verify::{run_configured, run_suite, Check, SuiteReport};

use crate::config::Setup;
use crate::output::{csv, Json};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymbolKind {
    Principal,
    Refined,
    Subprincipal,
    Compose,
    Dual,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FibreVariant {
    Ep,
    EpPlus,
    EpMinus,
    Proca,
}

impl FibreVariant {
    fn name(self) -> &'static str {
        match self {
            FibreVariant::Ep => "EP",
            FibreVariant::EpPlus => "EP+",
            FibreVariant::EpMinus => "EP-",
            FibreVariant::Proca => "proca",
        }
    }
}

fn compute(e: impl std::fmt::Display) -> CliError {
    CliError::Compute(e.to_string())
}

/// Checks a coordinate vector against the spacetime dimension.
pub fn point(m: &SpacetimeModel, flag: &str, v: &[f64]) -> Result<(), CliError> {
    if v.len() != m.dim() {
        return Err(CliError::Usage(format!("--{flag} has {} components, the spacetime has dimension {}", v.len(), m.dim())));
    }
    if v.iter().any(|c| !c.is_finite()) {
        return Err(CliError::Usage(format!("--{flag} must be finite")));
    }
    Ok(())
}

pub fn geodesic(s: &Setup, x: &[f64], k: &[f64], range: (f64, f64), format: Format) -> Result<String, CliError> {
    let m = &s.spacetime;
    point(m, "x", x)?;
    point(m, "k", k)?;
    if !(range.0 <= 0.0 && 0.0 <= range.1) {
        return Err(CliError::Usage("--lambda-range must contain 0".into()));
    }
    let strip = integrate_strip(m, &PhasePoint::new(x, k), range, &StepControl::default()).map_err(compute)?;
    let mut rows = Vec::with_capacity(strip.samples().len());
    for sm in strip.samples() {
        let q = m.q_value(&PhasePoint::new(&sm.x, &sm.k)).map_err(compute)?;
        let mut row = vec![sm.lambda];
        row.extend(&sm.x);
        row.extend(&sm.k);
        row.push(q);
        rows.push(row);
    }
    let n = m.dim();
    Ok(match format {
        Format::Csv => {
            let mut header = vec!["lambda".to_string()];
            header.extend((0..n).map(|i| format!("x{i}")));
            header.extend((0..n).map(|i| format!("k{i}")));
            header.push("q".into());
            csv(&header, &rows)
        }
        Format::Json => Json::obj([
            ("q0", Json::Num(strip.q0())),
            ("requested_range", Json::nums(&[range.0, range.1])),
            ("lambda_min", Json::Num(strip.lambda_min())),
            ("lambda_max", Json::Num(strip.lambda_max())),
            ("truncated_low", Json::Bool(strip.truncated_low())),
            ("truncated_high", Json::Bool(strip.truncated_high())),
            (
                "samples",
                Json::Arr(
                    rows.iter()
                        .map(|r| {
                            Json::obj([
                                ("lambda", Json::Num(r[0])),
                                ("x", Json::nums(&r[1..=n])),
                                ("k", Json::nums(&r[n + 1..=2 * n])),
                                ("q", Json::Num(r[2 * n + 1])),
                            ])
                        })
                        .collect(),
                ),
            ),
        ])
        .render(),
    })
}

/// Pair of phase points `(x, k)` and `(x′, k′)` as given on the command line.
pub struct Pair<'a> {
    pub x: &'a [f64],
    pub k: &'a [f64],
    pub xp: &'a [f64],
    pub kp: &'a [f64],
}

fn relation_point(s: &Setup, pair: &Pair) -> Result<RelationPoint, CliError> {
    let m = &s.spacetime;
    point(m, "x", pair.x)?;
    point(m, "k", pair.k)?;
    point(m, "xp", pair.xp)?;
    point(m, "kp", pair.kp)?;
    let neg: Vec<f64> = pair.kp.iter().map(|v| -v).collect();
    Ok(in_r(m, &PhasePoint::new(pair.x, pair.k), &PhasePoint::new(pair.xp, &neg), &s.params))
}

fn params_json(p: &RelationParams) -> Json {
    Json::obj([
        ("tol_pos", Json::Num(p.tol_pos)),
        ("tol_cov", Json::Num(p.tol_cov)),
        ("lambda_max", Json::Num(p.lambda_max)),
    ])
}

fn relation_json(rp: &RelationPoint) -> Json {
    let witness = rp.witness.as_ref().map_or(Json::Null, |w| {
        Json::obj([
            ("lambda_src", Json::Num(w.lambda_src)),
            ("lambda_dst", Json::Num(w.lambda_dst)),
            ("pos_residual", Json::Num(w.pos_residual)),
            ("cov_residual", Json::Num(w.cov_residual)),
        ])
    });
    let lambda_star = rp.witness.as_ref().map(|w| w.lambda_dst - w.lambda_src);
    Json::obj([
        ("p", Json::phase_point(&rp.p)),
        ("pp", Json::phase_point(&rp.pp())),
        ("verdict", Json::str(rp.r.name())),
        ("verdict_plus", Json::str(rp.r_plus.name())),
        ("verdict_minus", Json::str(rp.r_minus.name())),
        ("causal", Json::str(rp.causal_tag())),
        ("lambda_star", Json::opt_num(lambda_star)),
        ("witness", witness),
        ("multiple_witnesses", Json::Bool(rp.multiple_witnesses)),
        ("reason", Json::str(rp.reason.clone())),
    ])
}

pub fn relate(s: &Setup, pair: &Pair) -> Result<String, CliError> {
    let rp = relation_point(s, pair)?;
    Ok(Json::obj([("params", params_json(&s.params)), ("relation", relation_json(&rp))]).render())
}

pub fn transport(s: &Setup, pair: &Pair) -> Result<String, CliError> {
    let rp = relation_point(s, pair)?;
    let r = s.operator.rank();
    let propagator = match (rp.r, &rp.witness) {
        (Verdict::In, Some(w)) => {
            let pi = parallel_transport(&weitzenboeck_extract(&s.operator), w).map_err(compute)?;
            Json::obj([
                ("matrix", Json::complex_matrix(&pi.matrix)),
                ("from", Json::phase_point(&pi.from)),
                ("to", Json::phase_point(&pi.to)),
                ("condition", Json::Num(pi.condition)),
            ])
        }
        (Verdict::Out, _) => Json::obj([
            ("matrix", Json::complex_matrix(&DMatrix::<Complex64>::zeros(r, r))),
            ("from", Json::Null),
            ("to", Json::Null),
            ("condition", Json::Null),
        ]),
        _ => Json::Null,
    };
    Ok(Json::obj([
        ("params", params_json(&s.params)),
        ("relation", relation_json(&rp)),
        ("rank", Json::UInt(r as u64)),
        ("propagator", propagator),
    ])
    .render())
}

fn symbol_table(a: &PolySymbol) -> Json {
    let terms = a
        .coefficients()
        .iter()
        .map(|(alpha, c)| {
            Json::obj([
                ("alpha", Json::Arr(alpha.0.iter().map(|&v| Json::UInt(v as u64)).collect())),
                ("re", Json::expr_matrix(&c.re)),
                ("im", Json::expr_matrix(&c.im)),
            ])
        })
        .collect();
    Json::obj([
        ("dim", Json::UInt(a.dim() as u64)),
        ("rank", Json::UInt(a.rank() as u64)),
        ("order", Json::UInt(a.order() as u64)),
        ("terms", Json::Arr(terms)),
    ])
}

/// Coefficient tables `c_α(x)` of `a(x, ξ) = Σ c_α(x) ξ^α`, optionally evaluated at `(x, ξ)`.
pub fn symbol(s: &Setup, which: SymbolKind, at: Option<(&[f64], &[f64])>) -> Result<String, CliError> {
    if let Some((x, xi)) = at {
        point(&s.spacetime, "x", x)?;
        point(&s.spacetime, "k", xi)?;
    }
    let full = s.operator.full_symbol().map_err(compute)?;
    let (name, tables, value) = match which {
        SymbolKind::Refined => {
            let g = full.refined_principal();
            let value = at.map(|(x, xi)| g.evaluate(x, xi)).transpose().map_err(compute)?;
            ("refined", Json::Arr(g.parts.iter().map(symbol_table).collect()), value)
        }
        other => {
            let (name, a) = match other {
                SymbolKind::Principal => ("principal", full.principal()),
                SymbolKind::Subprincipal => ("subprincipal", full.subprincipal()),
                SymbolKind::Compose => ("compose", full.compose(&full, 0).map_err(compute)?),
                SymbolKind::Dual => ("dual", full.dual()),
                SymbolKind::Refined => unreachable!(),
            };
            let value = at.map(|(x, xi)| a.evaluate(x, xi)).transpose().map_err(compute)?;
            (name, Json::Arr(vec![symbol_table(&a)]), value)
        }
    };
    let mut fields = vec![
        ("which".to_string(), Json::str(name)),
        ("convention".to_string(), Json::str("a(x, xi) = sum_alpha c_alpha(x) xi^alpha")),
        ("tables".to_string(), tables),
    ];
    if let (Some((x, xi)), Some(v)) = (at, value) {
        fields.push(("at".into(), Json::obj([("x", Json::nums(x)), ("xi", Json::nums(xi))])));
        fields.push(("value".into(), Json::complex_matrix(&v)));
    }
    Ok(Json::Obj(fields).render())
}

fn fibre_json(f: &PolFibre) -> Json {
    Json::obj([
        ("zero", Json::Bool(f.is_zero())),
        ("basis", f.basis().map_or(Json::Null, Json::complex_matrix)),
    ])
}

pub fn polfibre(s: &Setup, pair: &Pair, variant: FibreVariant) -> Result<String, CliError> {
    let rp = relation_point(s, pair)?;
    let (verdict, fibre) = match variant {
        FibreVariant::Ep => (rp.r, fibre_ep(&s.operator, &rp).map_err(compute)?),
        FibreVariant::EpPlus => (rp.r_plus, fibre_ep_pm(&s.operator, &rp, Sign::Plus).map_err(compute)?),
        FibreVariant::EpMinus => (rp.r_minus, fibre_ep_pm(&s.operator, &rp, Sign::Minus).map_err(compute)?),
        FibreVariant::Proca => {
            let ctx = s.proca.as_ref().ok_or_else(|| CliError::Usage("the proca variant needs a proca block".into()))?;
            (rp.r, ctx.predicted_fibre(&rp).map_err(compute)?)
        }
    };
    Ok(Json::obj([
        ("variant", Json::str(variant.name())),
        ("verdict", Json::str(verdict.name())),
        ("relation", relation_json(&rp)),
        ("fibre", fibre_json(&fibre)),
    ])
    .render())
}

fn corollary_json(c: &CorollaryReport) -> Json {
    Json::obj([
        ("nonzero", Json::Bool(c.nonzero)),
        ("norm", Json::Num(c.norm)),
        ("threshold", Json::Num(c.threshold)),
    ])
}

/// The Proca chain at one relation point.
pub fn proca_demo(s: &Setup, pair: &Pair) -> Result<String, CliError> {
    let ctx = s.proca.as_ref().ok_or_else(|| CliError::Usage("proca-demo needs a proca block".into()))?;
    let rp = relation_point(s, pair)?;
    let mut fields = vec![
        ("mass".to_string(), Json::Num(ctx.mass())),
        ("relation".to_string(), relation_json(&rp)),
        ("r_symbol_x".to_string(), Json::real_matrix(&ctx.r_symbol(&rp.p).map_err(compute)?)),
        ("r_symbol_xp".to_string(), Json::real_matrix(&ctx.r_symbol(&rp.pp()).map_err(compute)?)),
    ];
    if rp.r == Verdict::In {
        let w = ctx.predicted_basis(&rp).map_err(compute)?;
        let (left, right) = ctx.constraint_residuals(&rp, &w).map_err(compute)?;
        let (chain_l, chain_r) = ctx.chain_consistency(&s.operator, &rp).map_err(compute)?;
        let claim = ctx.wf_claim(&s.operator, &rp).map_err(compute)?;
        fields.push(("predicted_basis".into(), Json::real_matrix(&w)));
        fields.push(("constraint_residuals".into(), Json::nums(&[left, right])));
        fields.push(("chain_distances".into(), Json::nums(&[chain_l, chain_r])));
        fields.push(("wf_claim".into(), corollary_json(&claim.claim)));
        fields.push(("negative_control".into(), corollary_json(&claim.control)));
    }
    Ok(Json::Obj(fields).render())
}

fn check_json(c: &Check) -> Json {
    Json::obj([
        ("id", Json::str(c.id.clone())),
        ("title", Json::str(c.title.clone())),
        ("passed", Json::Bool(c.passed())),
        ("cases", Json::UInt(c.cases as u64)),
        ("failures", Json::UInt(c.failures as u64)),
        (
            "metrics",
            Json::Arr(
                c.metrics
                    .iter()
                    .map(|m| {
                        Json::obj([
                            ("name", Json::str(m.name.clone())),
                            ("worst", Json::Num(m.worst)),
                            ("tolerance", Json::Num(m.tolerance)),
                            ("passed", Json::Bool(m.passed())),
                        ])
                    })
                    .collect(),
            ),
        ),
        ("budget_s", Json::opt_num(c.budget.map(|b| b.as_secs_f64()))),
        ("notes", Json::Arr(c.notes.iter().map(|n| Json::str(n.clone())).collect())),
    ])
}

/// Runs the built-in suite, plus the configured checks when a setup is given.
/// Timings go to stderr so the report itself is reproducible.
pub fn verify(setup: Option<&Setup>, seed: u64) -> (String, bool) {
    let mut report: SuiteReport = run_suite(seed);
    if let Some(s) = setup {
        report.checks.extend(run_configured(&s.spacetime, Some(&s.operator), seed));
        report.checks.sort_by(|a, b| a.id.cmp(&b.id));
    }
    for c in &report.checks {
        eprintln!("{}", c.summary());
    }
    let passed = report.passed();
    let doc = Json::obj([
        ("seed", Json::UInt(report.seed)),
        ("passed", Json::Bool(passed)),
        ("checks", Json::Arr(report.checks.iter().map(check_json).collect())),
    ]);
    (doc.render(), passed)
}
