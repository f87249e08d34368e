//! Seeded verification suite: the acceptance criteria plus the module properties.
//!
//! Every case draws from its own ChaCha stream keyed by `(seed, check, case)`, so
//! results do not depend on how rayon schedules the work.

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Vector3, Vector4};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bichar::{self, integrate_strip, Relation, RelationParams};
use crate::exprs::{parse, Expr, ExprMatrix};
use crate::geometry::{PhasePoint, SpacetimeModel};
use crate::nhop::{self, ConnectionForms, NHOperatorSpec};
use crate::ode::StepControl;
use crate::polsets::{self, PolFibre, Sign, Verdict};
use crate::proca::{self, ProcaContext};
use crate::symbols::{frame_change_refined, sample_points, CExprMatrix, MultiIndex, PolySymbol};

pub const DEFAULT_SEED: u64 = 0x5eed_2024;

/// Thirty smooth test expressions over `x0..x3`, all finite on `[0.3, 1.3]^4`.
pub const EXPR_CORPUS: [&str; 30] = [
    "x0^2 - x1^2",
    "exp(2*x0)",
    "x0*x1",
    "sin(x2)",
    "cos(x0*x1) + x2",
    "log(x0 + x1)",
    "sqrt(x0^2 + x1^2 + 1)",
    "tanh(x3 - x0)",
    "x0/(1 + x1^2)",
    "exp(-x0^2)*sin(3*x1)",
    "(x0 + x1)^3",
    "x0^x1",
    "2^x0",
    "x1^0.5",
    "1/(x0*x1)",
    "sin(x0)^2 + cos(x0)^2",
    "exp(sin(x1))",
    "sqrt(x3)*log(x2)",
    "tanh(x0)*tanh(x1)*tanh(x2)",
    "(x0 - x3)/(x1 + x2)",
    "x0^-2",
    "-x0^3 + 4*x0*x1 - 2",
    "cos(exp(x0 - 1))",
    "log(1 + x0^2*x1^2)",
    "x2^2.5",
    "sin(x0 + 2*x1 - x2 + 0.5*x3)",
    "exp(x0)*exp(-x1)/x2",
    "sqrt(1 + tanh(x0)^2)",
    "(1 + x0)^(1 + x1)",
    "-(x1 - x0)^4",
];

/// One measured quantity of a check against its tolerance.
#[derive(Clone, Debug, PartialEq)]
pub struct Metric {
    pub name: String,
    pub worst: f64,
    pub tolerance: f64,
}

impl Metric {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

#[derive(Clone, Debug)]
pub struct Check {
    pub id: String,
    pub title: String,
    pub cases: usize,
    pub metrics: Vec<Metric>,
    pub failures: usize,
    /// The first few failure messages.
    pub notes: Vec<String>,
    pub elapsed: Duration,
    pub budget: Option<Duration>,
}

impl Check {
    pub fn within_budget(&self) -> bool {
        self.budget.is_none_or(|b| self.elapsed <= b)
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.metrics.iter().all(Metric::passed) && self.within_budget()
    }

    /// One human-readable line.
    pub fn summary(&self) -> String {
        let metrics: Vec<String> =
            self.metrics.iter().map(|m| format!("{}={:.2e} (tol {:.0e})", m.name, m.worst, m.tolerance)).collect();
        let budget = self.budget.map_or(String::new(), |b| format!(" / {:.0}s", b.as_secs_f64()));
        format!(
            "{} {} [{}]: {} cases, {} failures, {}; {:.2}s{}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.cases,
            self.failures,
            metrics.join(", "),
            self.elapsed.as_secs_f64(),
            budget
        )
    }
}

/// Accumulates per-case outcomes into a [`Check`].
struct Tally {
    metrics: Vec<Metric>,
    cases: usize,
    failures: usize,
    notes: Vec<String>,
}

type CaseResult = Result<Vec<f64>, String>;

impl Tally {
    fn new(metrics: &[(&str, f64)]) -> Self {
        Tally {
            metrics: metrics.iter().map(|(n, t)| Metric { name: n.to_string(), worst: 0.0, tolerance: *t }).collect(),
            cases: 0,
            failures: 0,
            notes: Vec::new(),
        }
    }

    fn absorb(&mut self, idx: usize, r: CaseResult) {
        self.cases += 1;
        match r {
            Ok(values) => {
                let mut bad = false;
                for (m, v) in self.metrics.iter_mut().zip(values) {
                    let v = if v.is_nan() { f64::INFINITY } else { v };
                    m.worst = m.worst.max(v);
                    bad |= v > m.tolerance;
                }
                if bad {
                    self.failures += 1;
                    self.note(format!("case {idx} exceeds tolerance"));
                }
            }
            Err(e) => {
                self.failures += 1;
                self.note(format!("case {idx}: {e}"));
            }
        }
    }

    fn note(&mut self, s: String) {
        if self.notes.len() < 5 {
            self.notes.push(s);
        }
    }

    fn finish(self, id: &str, title: &str, start: Instant, budget: Option<f64>) -> Check {
        Check {
            id: id.to_string(),
            title: title.to_string(),
            cases: self.cases,
            metrics: self.metrics,
            failures: self.failures,
            notes: self.notes,
            elapsed: start.elapsed(),
            budget: budget.map(Duration::from_secs_f64),
        }
    }
}

fn run_cases<F>(id: &str, title: &str, budget: Option<f64>, n: usize, metrics: &[(&str, f64)], f: F) -> Check
where
    F: Fn(usize) -> CaseResult + Sync,
{
    let start = Instant::now();
    let results: Vec<CaseResult> = (0..n).into_par_iter().map(&f).collect();
    let mut tally = Tally::new(metrics);
    for (i, r) in results.into_iter().enumerate() {
        tally.absorb(i, r);
    }
    tally.finish(id, title, start, budget)
}

fn case_rng(seed: u64, check: u64, case: usize) -> ChaCha8Rng {
    let mixed = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(check.wrapping_mul(0xbf58_476d_1ce4_e5b9))
        .wrapping_add(case as u64);
    ChaCha8Rng::seed_from_u64(mixed)
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------------------
// random inputs

/// A smooth bounded coefficient field in one coordinate.
fn random_field(rng: &mut ChaCha8Rng, dim: usize) -> Expr {
    let c0: f64 = rng.random_range(-1.0..1.0);
    let c1: f64 = rng.random_range(-0.5..0.5);
    let j = rng.random_range(0..dim);
    let src = match rng.random_range(0..4) {
        0 => format!("{c0:?}"),
        1 => format!("{c0:?} + {c1:?}*x{j}"),
        2 => {
            let w: f64 = rng.random_range(0.5..2.0);
            let ph: f64 = rng.random_range(-1.0..1.0);
            format!("{c0:?} + {c1:?}*sin({w:?}*x{j} + {ph:?})")
        }
        _ => format!("{c0:?} + {c1:?}*exp(0.3*x{j})"),
    };
    parse(&src).expect("generated expressions parse")
}

fn random_matrix(rng: &mut ChaCha8Rng, rank: usize, dim: usize) -> ExprMatrix {
    ExprMatrix::from_fn(rank, rank, |_, _| random_field(rng, dim))
}

/// First-order coefficients are damped so transported frames stay within a few
/// orders of magnitude over the affine lengths used here.
fn random_operator(rng: &mut ChaCha8Rng, m: &Arc<SpacetimeModel>, rank: usize) -> Result<NHOperatorSpec, String> {
    let dim = m.dim();
    let damp = Expr::num(0.3);
    let c = (0..dim).map(|_| random_matrix(rng, rank, dim).scale(&damp)).collect();
    let v = random_matrix(rng, rank, dim);
    NHOperatorSpec::new(m.clone(), rank, c, v).map_err(err)
}

/// Null covector of Minkowski (and of any conformally flat chart) with `|k⃗| ∈ [0.5, 2]`.
/// `future` fixes `k_0 < 0`, which makes the flow future-directed.
fn random_null(rng: &mut ChaCha8Rng, dim: usize, future: Option<bool>) -> Vec<f64> {
    let mut s: Vec<f64> = (1..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = s.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-3);
    let target = rng.random_range(0.5..2.0);
    s.iter_mut().for_each(|v| *v *= target / n);
    let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
    let sign = match future {
        Some(true) => -1.0,
        Some(false) => 1.0,
        None => {
            if rng.random_bool(0.5) {
                1.0
            } else {
                -1.0
            }
        }
    };
    let mut k = vec![sign * norm];
    k.extend(s);
    k
}

fn random_point(rng: &mut ChaCha8Rng, dim: usize, time_half_width: f64, space_half_width: f64) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            let w = if i == 0 { time_half_width } else { space_half_width };
            rng.random_range(-w..w)
        })
        .collect()
}

fn random_cvec(rng: &mut ChaCha8Rng, r: usize) -> DVector<Complex64> {
    DVector::from_fn(r, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

struct Spacetimes {
    minkowski: Arc<SpacetimeModel>,
    flrw: Arc<SpacetimeModel>,
}

impl Spacetimes {
    fn new() -> Self {
        Spacetimes {
            minkowski: Arc::new(SpacetimeModel::minkowski(4).expect("builtin")),
            flrw: Arc::new(SpacetimeModel::flrw_exponential(4, 1.0).expect("builtin")),
        }
    }

    fn pick(&self, flrw: bool) -> &Arc<SpacetimeModel> {
        if flrw {
            &self.flrw
        } else {
            &self.minkowski
        }
    }
}

/// A point `(x, k)` related to `(x′, k′)` by the flow over `λ*`. In both builtin
/// spacetimes `k` is constant along null strips, so `k = k′` exactly; `x` comes
/// from the closed form in Minkowski and from the integrated strip otherwise.
struct RelatedPair {
    p: PhasePoint,
    pp: PhasePoint,
}

fn related_pair(rng: &mut ChaCha8Rng, m: &SpacetimeModel, flrw: bool) -> Result<RelatedPair, String> {
    let xp = random_point(rng, 4, if flrw { 0.5 } else { 2.0 }, 2.0);
    let kp = random_null(rng, 4, if flrw { Some(true) } else { None });
    let lam: f64 = rng.random_range(0.5..3.0);
    let pp = PhasePoint::new(&xp, &kp);
    let x = if flrw {
        let strip = integrate_strip(m, &pp, (0.0, lam), &StepControl::default()).map_err(err)?;
        if strip.truncated() {
            return Err("construction strip left the chart".into());
        }
        strip.samples().last().expect("non-empty").x.clone()
    } else {
        let mut x = xp.clone();
        x[0] += -2.0 * lam * kp[0];
        for i in 1..4 {
            x[i] += 2.0 * lam * kp[i];
        }
        x
    };
    Ok(RelatedPair { p: PhasePoint::new(&x, &kp), pp })
}

// ---------------------------------------------------------------------------
// acceptance criteria

fn criterion_psub(seed: u64) -> Check {
    let st = Spacetimes::new();
    run_cases("criterion-01", "subprincipal identity", Some(10.0), 100, &[("residual", 1e-9)], |i| {
        let mut rng = case_rng(seed, 1, i);
        let flrw = i % 2 == 1;
        let m = st.pick(flrw);
        let rank = rng.random_range(1..=3);
        let p = random_operator(&mut rng, m, rank)?;
        let x = random_point(&mut rng, 4, 1.0, 1.0);
        let k: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let r = nhop::verify_psub_identity(&p, &PhasePoint::new(&x, &k)).map_err(err)?;
        Ok(vec![r])
    })
}

fn criterion_orbit(seed: u64) -> Check {
    let st = Spacetimes::new();
    run_cases("criterion-02", "orbit-transport equivalence", Some(10.0), 50, &[("relative error", 1e-6)], |i| {
        let mut rng = case_rng(seed, 2, i);
        let flrw = i % 2 == 1;
        let m = st.pick(flrw);
        let rank = rng.random_range(1..=3);
        let p = random_operator(&mut rng, m, rank)?;
        let x = random_point(&mut rng, 4, if flrw { 0.5 } else { 1.0 }, 1.0);
        let k = random_null(&mut rng, 4, if flrw { Some(true) } else { None });
        let strip = integrate_strip(m, &PhasePoint::new(&x, &k), (0.0, 5.0), &StepControl::default()).map_err(err)?;
        if strip.truncated() {
            return Err("strip left the chart".into());
        }
        let w0 = random_cvec(&mut rng, rank);
        let orbit = bichar::hamilton_orbit(&p, &strip, &w0, 5.0).map_err(err)?;
        let gamma = nhop::weitzenboeck_extract(&p);
        let n = orbit.lambdas.len();
        let mut worst: f64 = 0.0;
        for idx in [n / 3, 2 * n / 3, n - 1] {
            let pi = bichar::transport_along(&gamma, &strip, 0.0, orbit.lambdas[idx]).map_err(err)?;
            let predicted = complex(&pi) * &w0;
            worst = worst.max((&orbit.values[idx] - &predicted).norm() / predicted.norm());
        }
        Ok(vec![worst])
    })
}

fn criterion_flow(seed: u64) -> Check {
    let st = Spacetimes::new();
    run_cases(
        "criterion-03",
        "flow conservation",
        Some(5.0),
        20,
        &[("q drift", 1e-9), ("momentum residual", 1e-9)],
        |i| {
            let mut rng = case_rng(seed, 3, i);
            let flrw = i % 2 == 1;
            let m = st.pick(flrw);
            let x = random_point(&mut rng, 4, if flrw { 0.5 } else { 2.0 }, 2.0);
            let k = random_null(&mut rng, 4, if flrw { Some(true) } else { None });
            let strip =
                integrate_strip(m, &PhasePoint::new(&x, &k), (0.0, 10.0), &StepControl::default()).map_err(err)?;
            if strip.truncated() {
                return Err("strip left the chart".into());
            }
            Ok(vec![strip.max_q_drift(m).map_err(err)?, strip.max_momentum_residual(m).map_err(err)?])
        },
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Perturbation {
    None,
    Shift,
    Rotation,
    Scaling,
}

/// Rotates `v` by `theta` about a unit axis orthogonal to it.
fn rotate_orthogonal(rng: &mut ChaCha8Rng, v: &Vector3<f64>, theta: f64) -> Vector3<f64> {
    let mut axis;
    loop {
        axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        axis -= v * (axis.dot(v) / v.norm_squared());
        if axis.norm() > 1e-3 {
            break;
        }
    }
    let axis = axis.normalize();
    v * theta.cos() + axis.cross(v) * theta.sin()
}

fn criterion_relation(seed: u64) -> Check {
    let m = SpacetimeModel::minkowski(4).expect("builtin");
    let params = RelationParams::default();
    let start = Instant::now();
    let outcomes: Vec<Result<(Perturbation, Relation), String>> = (0..1000usize)
        .into_par_iter()
        .map(|i| {
            let mut rng = case_rng(seed, 4, i);
            let kind = if i < 500 {
                Perturbation::None
            } else {
                [Perturbation::Shift, Perturbation::Rotation, Perturbation::Scaling][i % 3]
            };
            let xp = random_point(&mut rng, 4, 3.0, 3.0);
            let kp = random_null(&mut rng, 4, None);
            let lam = loop {
                let l: f64 = rng.random_range(-8.0..8.0);
                if l.abs() >= 0.05 {
                    break l;
                }
            };
            let xdot = [-2.0 * kp[0], 2.0 * kp[1], 2.0 * kp[2], 2.0 * kp[3]];
            let mut x: Vec<f64> = (0..4).map(|j| xp[j] + lam * xdot[j]).collect();
            let mut k = kp.clone();
            match kind {
                Perturbation::None => {}
                Perturbation::Shift => {
                    let delta: f64 = rng.random_range(1e-3..1e-1);
                    let t = DVector::from_column_slice(&xdot).normalize();
                    let mut u = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
                    u -= &t * t.dot(&u);
                    let u = u.normalize();
                    for j in 0..4 {
                        x[j] += delta * u[j];
                    }
                }
                Perturbation::Rotation => {
                    let theta: f64 = rng.random_range(1e-3..0.5);
                    let s = Vector3::new(kp[1], kp[2], kp[3]);
                    let r = rotate_orthogonal(&mut rng, &s, theta);
                    k = vec![kp[0], r[0], r[1], r[2]];
                }
                Perturbation::Scaling => {
                    let f: f64 = rng.random_range(1e-3..1.0);
                    let s = if rng.random_bool(0.5) { 1.0 + f } else { 1.0 / (1.0 + f) };
                    k.iter_mut().for_each(|v| *v *= s);
                }
            }
            let out = bichar::relation_check(&m, &PhasePoint::new(&x, &k), &PhasePoint::new(&xp, &kp), &params)
                .map_err(err)?;
            Ok((kind, out.relation))
        })
        .collect();
    let mut tally = Tally::new(&[("false positives", 0.0), ("false negatives", 0.0)]);
    let (mut fp, mut fneg) = (0.0, 0.0);
    for (i, o) in outcomes.into_iter().enumerate() {
        tally.cases += 1;
        match o {
            Ok((Perturbation::None, Relation::Related)) => {}
            Ok((Perturbation::None, r)) => {
                fneg += 1.0;
                tally.note(format!("case {i}: related pair judged {}", r.name()));
            }
            Ok((_, Relation::NotRelated)) => {}
            Ok((kind, r)) => {
                fp += 1.0;
                tally.note(format!("case {i}: {kind:?} pair judged {}", r.name()));
            }
            Err(e) => {
                tally.failures += 1;
                tally.note(format!("case {i}: {e}"));
            }
        }
    }
    tally.metrics[0].worst = fp;
    tally.metrics[1].worst = fneg;
    tally.finish("criterion-04", "relation oracle, flat case", start, Some(20.0))
}

/// Operator coefficients of a random order-`order` differential operator.
fn random_operator_terms(
    rng: &mut ChaCha8Rng,
    dim: usize,
    rank: usize,
    order: usize,
) -> Vec<(MultiIndex, CExprMatrix)> {
    let mut terms = Vec::new();
    for o in 0..=order {
        for alpha in MultiIndex::all_of_order(dim, o) {
            let re = random_matrix(rng, rank, dim);
            let im = if rng.random_bool(0.3) { random_matrix(rng, rank, dim) } else { ExprMatrix::zeros(rank, rank) };
            terms.push((alpha, CExprMatrix { re, im }));
        }
    }
    terms
}

fn binomial(alpha: &MultiIndex, beta: &MultiIndex) -> f64 {
    alpha.0.iter().zip(&beta.0).map(|(&a, &b)| (1..=b as u32).map(|j| (a as u32 + 1 - j) as f64 / j as f64).product::<f64>()).product()
}

fn x_derivatives(c: &CExprMatrix, beta: &MultiIndex) -> CExprMatrix {
    let mut d = c.clone();
    for (mu, &n) in beta.0.iter().enumerate() {
        for _ in 0..n {
            d = d.diff(mu);
        }
    }
    d
}

/// Operator composition by the Leibniz rule on coefficients:
/// `(Σ A_α ∂^α)(Σ B_γ ∂^γ) = Σ C(α,β) A_α (∂^β B_γ) ∂^{α-β+γ}`.
fn leibniz_compose(
    a: &[(MultiIndex, CExprMatrix)],
    b: &[(MultiIndex, CExprMatrix)],
) -> Vec<(MultiIndex, CExprMatrix)> {
    let mut out = Vec::new();
    for (alpha, ca) in a {
        for beta in alpha.below() {
            let rest = alpha.checked_sub(&beta).expect("β ≤ α");
            let coef = binomial(alpha, &beta);
            for (gamma, cb) in b {
                let d = x_derivatives(cb, &beta);
                if d.is_zero() {
                    continue;
                }
                out.push((rest.add(gamma), ca.mul(&d).scale(coef)));
            }
        }
    }
    out
}

fn criterion_compose(seed: u64) -> Check {
    run_cases("criterion-05", "symbol composition oracle", Some(5.0), 50, &[("coefficient difference", 1e-10)], |i| {
        let mut rng = case_rng(seed, 5, i);
        let dim = rng.random_range(1..=4);
        let rank = rng.random_range(1..=3);
        let (oa, ob) = (rng.random_range(0..=2), rng.random_range(0..=2));
        let ta = random_operator_terms(&mut rng, dim, rank, oa);
        let tb = random_operator_terms(&mut rng, dim, rank, ob);
        let a = PolySymbol::from_operator(dim, rank, oa, ta.clone()).map_err(err)?;
        let b = PolySymbol::from_operator(dim, rank, ob, tb.clone()).map_err(err)?;
        let composed = a.compose(&b, 0).map_err(err)?;
        let oracle = PolySymbol::from_operator(dim, rank, oa + ob, leibniz_compose(&ta, &tb)).map_err(err)?;
        let points: Vec<Vec<f64>> = (0..5).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        Ok(vec![composed.max_coeff_diff(&oracle, &points).map_err(err)?])
    })
}

/// Bounded frame field `I + 0.2 B` with `|B_ij| ≤ 1`, invertible for rank ≤ 3.
fn random_frame(rng: &mut ChaCha8Rng, rank: usize, dim: usize) -> ExprMatrix {
    ExprMatrix::from_fn(rank, rank, |i, j| {
        let w: f64 = rng.random_range(0.5..2.0);
        let ph: f64 = rng.random_range(-3.0..3.0);
        let mu = rng.random_range(0..dim);
        let f = if rng.random_bool(0.5) { "sin" } else { "cos" };
        let base = if i == j { "1 + " } else { "" };
        parse(&format!("{base}0.2*{f}({w:?}*x{mu} + {ph:?})")).expect("generated expressions parse")
    })
}

/// Random symbol with scalar principal part `h^{μν}(x) ξ_μ ξ_ν I`.
fn random_scalar_principal_symbol(rng: &mut ChaCha8Rng, dim: usize, rank: usize) -> Result<PolySymbol, String> {
    let mut terms = Vec::new();
    for mu in 0..dim {
        for nu in mu..dim {
            let eta = if mu != nu {
                0.0
            } else if mu == 0 {
                1.0
            } else {
                -1.0
            };
            let bump = random_field(rng, dim);
            let h = Expr::add(Expr::num(eta), Expr::mul(Expr::num(0.1), bump));
            let h = if mu == nu { h } else { Expr::mul(Expr::num(2.0), h) };
            terms.push((MultiIndex::pair(dim, mu, nu), CExprMatrix::real(ExprMatrix::identity(rank).scale(&h))));
        }
    }
    for mu in 0..dim {
        terms.push((MultiIndex::unit(dim, mu), CExprMatrix::real(random_matrix(rng, rank, dim))));
    }
    terms.push((MultiIndex::zero(dim), CExprMatrix::real(random_matrix(rng, rank, dim))));
    PolySymbol::from_operator(dim, rank, 2, terms).map_err(err)
}

fn criterion_frame(seed: u64) -> Check {
    run_cases("criterion-06", "frame covariance", Some(5.0), 20, &[("section residual", 1e-9)], |i| {
        let mut rng = case_rng(seed, 6, i);
        let dim = rng.random_range(2..=4);
        let rank = rng.random_range(1..=3);
        let a = random_scalar_principal_symbol(&mut rng, dim, rank)?;
        let m = random_frame(&mut rng, rank, dim);
        let gamma: Option<Vec<ExprMatrix>> =
            if i % 2 == 0 { Some((0..dim).map(|_| random_matrix(&mut rng, rank, dim)).collect()) } else { None };
        let report = frame_change_refined(&a, &m, gamma.as_deref()).map_err(err)?;
        Ok(vec![report.residual])
    })
}

fn criterion_fibres(seed: u64) -> Check {
    let st = Spacetimes::new();
    let params = RelationParams::default();
    run_cases(
        "criterion-07",
        "fibre consistency",
        Some(15.0),
        50,
        &[("composition", 1e-8), ("reversal", 1e-8), ("sign flip", 1e-6), ("diagonal", 1e-6)],
        |i| {
            let mut rng = case_rng(seed, 7, i);
            let flrw = i % 2 == 1;
            let rank = if (i / 2) % 2 == 0 { 1 } else { 2 };
            let m = st.pick(flrw);
            let p = random_operator(&mut rng, m, rank)?;
            let pair = related_pair(&mut rng, m, flrw)?;
            let rp = polsets::in_r(m, &pair.p, &pair.pp.flipped(), &params);
            if rp.r != Verdict::In {
                return Err(format!("constructed point judged {} ({})", rp.r.name(), rp.reason));
            }
            let w = rp.witness.as_ref().expect("related points carry a witness");
            let gamma = nhop::weitzenboeck_extract(&p);
            let pi = polsets::propagator(&p, &rp).map_err(err)?;
            let pi_re = pi.map(|c| c.re);
            let fibre = polsets::fibre_ep(&p, &rp).map_err(err)?;
            let scale = pi.norm();

            let mid = 0.5 * (w.lambda_src + w.lambda_dst);
            let first = bichar::transport_along(&gamma, &w.strip, w.lambda_src, mid).map_err(err)?;
            let second = bichar::transport_along(&gamma, &w.strip, mid, w.lambda_dst).map_err(err)?;
            let composition = (&pi_re - second * first).norm() / scale;

            let back = bichar::transport_along(&gamma, &w.strip, w.lambda_dst, w.lambda_src).map_err(err)?;
            let reversal = (back * &pi_re - DMatrix::identity(rank, rank)).norm();

            let flipped = polsets::in_r(m, &pair.p.flipped(), &pair.pp, &params);
            if flipped.r != Verdict::In {
                return Err(format!("sign-flipped point judged {}", flipped.r.name()));
            }
            let pi_flip = polsets::propagator(&p, &flipped).map_err(err)?;
            let fibre_flip = polsets::fibre_ep(&p, &flipped).map_err(err)?;
            let sign_flip = ((&pi_flip - &pi).norm() / scale).max(fibre.fibre_distance(&fibre_flip));

            let diag = polsets::in_r(m, &pair.pp, &pair.pp.flipped(), &params);
            let identity = PolFibre::span_real(&DMatrix::identity(rank, rank));
            let mut diagonal = identity.fibre_distance(&polsets::fibre_ep(&p, &diag).map_err(err)?);
            for sign in [Sign::Plus, Sign::Minus] {
                let f = polsets::fibre_ep_pm(&p, &diag, sign).map_err(err)?;
                diagonal = diagonal.max(identity.fibre_distance(&f));
            }
            let membership = fibre.distance(&pi);
            Ok(vec![composition, reversal, sign_flip.max(membership), diagonal])
        },
    )
}

fn criterion_proca(seed: u64) -> Check {
    let st = Spacetimes::new();
    let params = RelationParams::default();
    let start = Instant::now();
    let mut tally = Tally::new(&[
        ("annihilator residual", 1e-12),
        ("chain distance", 1e-6),
        ("claim mismatches", 0.0),
        ("z round trip", 1e-10),
    ]);
    let kg1 = |flrw: bool, mass: f64| -> Result<(ProcaContext, NHOperatorSpec), String> {
        let ctx = ProcaContext::new(st.pick(flrw).clone(), mass).map_err(err)?;
        let spec = ctx.kg1_spec().map_err(err)?;
        Ok((ctx, spec))
    };
    let ops: Vec<Result<(ProcaContext, NHOperatorSpec), String>> = vec![kg1(false, 1.0), kg1(true, 1.0)];
    let points: Vec<CaseResult> = (0..30usize)
        .into_par_iter()
        .map(|i| {
            let mut rng = case_rng(seed, 8, i);
            let flrw = i % 2 == 1;
            let (ctx, spec) = ops[flrw as usize].as_ref().map_err(|e| e.clone())?;
            let m = ctx.spacetime();
            let pair = related_pair(&mut rng, m, flrw)?;
            let rp = polsets::in_r(m, &pair.p, &pair.pp.flipped(), &params);
            if rp.r != Verdict::In {
                return Err(format!("constructed point judged {}", rp.r.name()));
            }
            let basis = ctx.predicted_fibre(&rp).map_err(err)?;
            let w = basis.basis().expect("nonzero on 𝓡").map(|c| c.re);
            let (l, r) = ctx.constraint_residuals(&rp, &w).map_err(err)?;
            let (dl, dr) = ctx.chain_consistency(spec, &rp).map_err(err)?;
            let claim = ctx.wf_claim(spec, &rp).map_err(err)?;
            let mismatch = if claim.claim.nonzero && !claim.control.nonzero { 0.0 } else { 1.0 };
            Ok(vec![l.max(r), dl.max(dr), mismatch, 0.0])
        })
        .collect();
    for (i, r) in points.into_iter().enumerate() {
        tally.absorb(i, r);
    }
    for i in 0..100usize {
        let mut rng = case_rng(seed, 80, i);
        let k = random_null(&mut rng, 4, None);
        let ks = Vector3::new(k[1], k[2], k[3]);
        let kv = Vector4::new(k[0], k[1], k[2], k[3]);
        let mut z = Vector4::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        z[0] -= proca::minkowski_pairing(&kv, &z) / k[0];
        let res = proca::v_from_z(&ks, k[0], &z)
            .and_then(|v| proca::z_from_v(&ks, k[0], &v))
            .map(|z2| vec![0.0, 0.0, 0.0, (z2 - z).norm() / (1.0 + z.norm())])
            .map_err(err);
        tally.absorb(30 + i, res);
    }
    tally.finish("criterion-08", "Proca suite", start, Some(15.0))
}

fn criterion_exprs(seed: u64) -> Check {
    let start = Instant::now();
    let mut tally = Tally::new(&[("derivative error", 1e-6), ("round-trip error", 1e-12)]);
    for (idx, src) in EXPR_CORPUS.iter().enumerate() {
        let mut rng = case_rng(seed, 9, idx);
        let res = (|| -> CaseResult {
            let e = parse(src).map_err(err)?;
            let back = parse(&e.to_string()).map_err(err)?;
            let mut d_err: f64 = 0.0;
            let mut rt_err: f64 = 0.0;
            for _ in 0..5 {
                let x: Vec<f64> = (0..4).map(|_| rng.random_range(0.3..1.3)).collect();
                for i in 0..4 {
                    let analytic = e.diff(i).eval(&x).map_err(err)?;
                    let h = 1e-6;
                    let (mut xp, mut xm) = (x.clone(), x.clone());
                    xp[i] += h;
                    xm[i] -= h;
                    let fd = (e.eval(&xp).map_err(err)? - e.eval(&xm).map_err(err)?) / (2.0 * h);
                    d_err = d_err.max((analytic - fd).abs() / (1.0 + analytic.abs()));
                }
            }
            for _ in 0..100 {
                let x: Vec<f64> = (0..4).map(|_| rng.random_range(0.3..1.3)).collect();
                let a = e.eval(&x).map_err(err)?;
                let b = back.eval(&x).map_err(err)?;
                rt_err = rt_err.max((a - b).abs() / a.abs().max(1.0));
            }
            Ok(vec![d_err, rt_err])
        })();
        tally.absorb(idx, res);
    }
    tally.finish("criterion-09", "expression engine", start, Some(2.0))
}

/// Runs acceptance criterion `id` (1 to 9).
pub fn run_criterion(id: usize, seed: u64) -> Option<Check> {
    Some(match id {
        1 => criterion_psub(seed),
        2 => criterion_orbit(seed),
        3 => criterion_flow(seed),
        4 => criterion_relation(seed),
        5 => criterion_compose(seed),
        6 => criterion_frame(seed),
        7 => criterion_fibres(seed),
        8 => criterion_proca(seed),
        9 => criterion_exprs(seed),
        _ => return None,
    })
}

/// All nine criteria, run one after another so the runtimes are not inflated by
/// each other; each criterion fans out internally.
pub fn run_criteria(seed: u64) -> Vec<Check> {
    (1..=9).filter_map(|id| run_criterion(id, seed)).collect()
}

// ---------------------------------------------------------------------------
// module properties

fn prop_diff_commutes(seed: u64) -> Check {
    run_cases("property/exprs/diff-commutes", "mixed partials commute", None, EXPR_CORPUS.len(), &[("relative", 1e-9)], |idx| {
        let mut rng = case_rng(seed, 101, idx);
        let e = parse(EXPR_CORPUS[idx]).map_err(err)?;
        let mut worst: f64 = 0.0;
        for _ in 0..5 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(0.3..1.3)).collect();
            for i in 0..4 {
                for j in (i + 1)..4 {
                    let a = e.diff(i).diff(j).eval(&x).map_err(err)?;
                    let b = e.diff(j).diff(i).eval(&x).map_err(err)?;
                    worst = worst.max((a - b).abs() / a.abs().max(1.0));
                }
            }
        }
        Ok(vec![worst])
    })
}

fn random_symbol(rng: &mut ChaCha8Rng, dim: usize, rank: usize) -> Result<PolySymbol, String> {
    let order = rng.random_range(0..=2);
    PolySymbol::from_operator(dim, rank, order, random_operator_terms(rng, dim, rank, order)).map_err(err)
}

fn prop_compose_associative(seed: u64) -> Check {
    run_cases("property/symbols/compose-associative", "composition is associative", None, 12, &[("coefficient difference", 1e-10)], |i| {
        let mut rng = case_rng(seed, 102, i);
        let dim = rng.random_range(1..=4);
        let rank = rng.random_range(1..=3);
        let a = random_symbol(&mut rng, dim, rank)?;
        let b = random_symbol(&mut rng, dim, rank)?;
        let c = random_symbol(&mut rng, dim, rank)?;
        let left = a.compose(&b, 0).and_then(|ab| ab.compose(&c, 0)).map_err(err)?;
        let right = b.compose(&c, 0).and_then(|bc| a.compose(&bc, 0)).map_err(err)?;
        let points: Vec<Vec<f64>> = (0..4).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        Ok(vec![left.max_coeff_diff(&right, &points).map_err(err)?])
    })
}

fn prop_dual_involution(seed: u64) -> Check {
    run_cases("property/symbols/dual-involution", "dual is an involution", None, 20, &[("mismatches", 0.0)], |i| {
        let mut rng = case_rng(seed, 103, i);
        let dim = rng.random_range(1..=4);
        let rank = rng.random_range(1..=3);
        let a = random_symbol(&mut rng, dim, rank)?;
        Ok(vec![if a.dual().dual() == a { 0.0 } else { 1.0 }])
    })
}

/// `Σ_α ∂_x^μ c_α ξ^α` at a point.
fn eval_x_derivative(a: &PolySymbol, mu: usize, x: &[f64], xi: &[f64]) -> Result<Complex64, String> {
    let mut acc = Complex64::new(0.0, 0.0);
    for (alpha, c) in a.coefficients() {
        acc += c.diff(mu).eval(x).map_err(err)?[(0, 0)] * alpha.monomial(xi);
    }
    Ok(acc)
}

fn eval_scalar(a: &PolySymbol, x: &[f64], xi: &[f64]) -> Result<Complex64, String> {
    Ok(a.evaluate(x, xi).map_err(err)?[(0, 0)])
}

/// `(ab)^r = a^r b^r + (1/2i){a, b}` in the top two degrees, for scalar symbols.
fn prop_refined_composition(seed: u64) -> Check {
    run_cases("property/symbols/refined-composition", "refined symbol of a composition", None, 20, &[("relative", 1e-9)], |i| {
        let mut rng = case_rng(seed, 104, i);
        let dim = rng.random_range(1..=4);
        let oa = rng.random_range(1..=2);
        let ob = rng.random_range(1..=2);
        let a = PolySymbol::from_operator(dim, 1, oa, random_operator_terms(&mut rng, dim, 1, oa)).map_err(err)?;
        let b = PolySymbol::from_operator(dim, 1, ob, random_operator_terms(&mut rng, dim, 1, ob)).map_err(err)?;
        let ab = a.compose(&b, 0).map_err(err)?;
        let lhs_sym = ab.refined_principal();
        let (ar, br) = (a.refined_principal(), b.refined_principal());
        let (am, bm) = (&ar.parts[0], &br.parts[0]);
        let mut worst: f64 = 0.0;
        for (x, xi) in sample_points(dim, 10, seed ^ i as u64) {
            let lhs = lhs_sym.evaluate(&x, &xi).map_err(err)?[(0, 0)];
            let (a0, a1) = (eval_scalar(am, &x, &xi)?, eval_scalar(&ar.parts[1], &x, &xi)?);
            let (b0, b1) = (eval_scalar(bm, &x, &xi)?, eval_scalar(&br.parts[1], &x, &xi)?);
            let mut bracket = Complex64::new(0.0, 0.0);
            for mu in 0..dim {
                let da_xi = eval_scalar(&am.xi_derivative(mu), &x, &xi)?;
                let db_xi = eval_scalar(&bm.xi_derivative(mu), &x, &xi)?;
                bracket += da_xi * eval_x_derivative(bm, mu, &x, &xi)? - eval_x_derivative(am, mu, &x, &xi)? * db_xi;
            }
            let rhs = a0 * b0 + a0 * b1 + a1 * b0 + bracket / Complex64::new(0.0, 2.0);
            worst = worst.max((lhs - rhs).norm() / (1.0 + lhs.norm()));
        }
        Ok(vec![worst])
    })
}

fn prop_reconstruction(seed: u64) -> Check {
    let st = Spacetimes::new();
    run_cases("property/nhop/reconstruction", "Weitzenböck reconstruction", None, 20, &[("coefficient difference", 1e-12)], |i| {
        let mut rng = case_rng(seed, 105, i);
        let m = st.pick(i % 2 == 1);
        let rank = rng.random_range(1..=3);
        let p = random_operator(&mut rng, m, rank)?;
        let back = nhop::reconstruct(m.clone(), &nhop::weitzenboeck_extract(&p), p.potential().clone()).map_err(err)?;
        let mut worst: f64 = 0.0;
        for _ in 0..5 {
            let x = random_point(&mut rng, 4, 1.0, 1.0);
            for nu in 0..4 {
                let a = p.first_order()[nu].eval(&x).map_err(err)?;
                let b = back.first_order()[nu].eval(&x).map_err(err)?;
                worst = worst.max((a - b).amax());
            }
            let a = p.potential().eval(&x).map_err(err)?;
            let b = back.potential().eval(&x).map_err(err)?;
            worst = worst.max((a - b).amax());
        }
        Ok(vec![worst])
    })
}

fn prop_dual_pairing(seed: u64) -> Check {
    let st = Spacetimes::new();
    run_cases("property/bichar/dual-pairing", "dual pairing is constant", None, 10, &[("drift", 1e-8)], |i| {
        let mut rng = case_rng(seed, 106, i);
        let flrw = i % 2 == 1;
        let m = st.pick(flrw);
        let rank = rng.random_range(1..=3);
        let p = random_operator(&mut rng, m, rank)?;
        let gamma = nhop::weitzenboeck_extract(&p);
        let dual = nhop::dual_connection(&gamma);
        let x = random_point(&mut rng, 4, if flrw { 0.5 } else { 1.0 }, 1.0);
        let k = random_null(&mut rng, 4, if flrw { Some(true) } else { None });
        let strip = integrate_strip(m, &PhasePoint::new(&x, &k), (0.0, 3.0), &StepControl::default()).map_err(err)?;
        let u0 = DVector::from_fn(rank, |_, _| rng.random_range(-1.0..1.0));
        let v0 = DVector::from_fn(rank, |_, _| rng.random_range(-1.0..1.0));
        let start = v0.dot(&u0);
        let mut worst: f64 = 0.0;
        for lam in [0.7, 1.9, 3.0] {
            let s = bichar::transport_along(&gamma, &strip, 0.0, lam).map_err(err)?;
            let t = bichar::transport_along(&dual, &strip, 0.0, lam).map_err(err)?;
            worst = worst.max(((t * &v0).dot(&(s * &u0)) - start).abs());
        }
        Ok(vec![worst])
    })
}

fn prop_future_past_disjoint(seed: u64) -> Check {
    let m = Arc::new(SpacetimeModel::minkowski(4).expect("builtin"));
    let params = RelationParams::default();
    run_cases("property/polsets/future-past-disjoint", "off-diagonal 𝓡⁺ ∩ 𝓡⁻ is empty", None, 40, &[("overlaps", 0.0)], |i| {
        let mut rng = case_rng(seed, 107, i);
        let pair = related_pair(&mut rng, &m, false)?;
        let rp = polsets::in_r(&m, &pair.p, &pair.pp.flipped(), &params);
        if rp.r != Verdict::In {
            return Err(format!("constructed point judged {}", rp.r.name()));
        }
        Ok(vec![if rp.r_plus == Verdict::In && rp.r_minus == Verdict::In { 1.0 } else { 0.0 }])
    })
}

fn prop_corollary_nonzero(seed: u64) -> Check {
    let st = Spacetimes::new();
    let params = RelationParams::default();
    run_cases("property/polsets/corollary-nonzero", "q = id against r nonvanishing on 𝒩", None, 20, &[("zero verdicts", 0.0)], |i| {
        let mut rng = case_rng(seed, 108, i);
        let flrw = i % 2 == 1;
        let m = st.pick(flrw);
        let rank = rng.random_range(1..=3);
        let p = random_operator(&mut rng, m, rank)?;
        let pair = related_pair(&mut rng, m, flrw)?;
        let rp = polsets::in_r(m, &pair.p, &pair.pp.flipped(), &params);
        let shift = DMatrix::from_fn(rank, rank, |_, _| rng.random_range(-0.3..0.3));
        let r = move |pt: &PhasePoint| {
            let s = pt.k.norm();
            complex(&(DMatrix::identity(rank, rank) * s + &shift * 0.1))
        };
        let id = |_: &PhasePoint| DMatrix::<Complex64>::identity(rank, rank);
        let rep = polsets::corollary_test(id, r, &p, &rp).map_err(err)?;
        Ok(vec![if rep.nonzero { 0.0 } else { 1.0 }])
    })
}

fn prop_transport_constraint(seed: u64) -> Check {
    let st = Spacetimes::new();
    let params = RelationParams::default();
    run_cases("property/proca/transport-constraint", "Levi-Civita transports k′ to k", None, 10, &[("mismatch", 1e-8)], |i| {
        let mut rng = case_rng(seed, 109, i);
        let flrw = i % 2 == 1;
        let m = st.pick(flrw);
        let pair = related_pair(&mut rng, m, flrw)?;
        let rp = polsets::in_r(m, &pair.p, &pair.pp.flipped(), &params);
        let w = rp.witness.as_ref().ok_or("no witness")?;
        let forms: ConnectionForms = proca::levi_civita_forms(m);
        let s = bichar::transport_along(&forms, &w.strip, w.lambda_src, w.lambda_dst).map_err(err)?;
        let end = w.strip.state_at(w.lambda_dst).k;
        let moved = s * &pair.pp.k;
        Ok(vec![(moved - DVector::from_vec(end)).norm()])
    })
}

pub fn run_properties(seed: u64) -> Vec<Check> {
    let runs: Vec<fn(u64) -> Check> = vec![
        prop_diff_commutes,
        prop_compose_associative,
        prop_dual_involution,
        prop_refined_composition,
        prop_reconstruction,
        prop_dual_pairing,
        prop_future_past_disjoint,
        prop_corollary_nonzero,
        prop_transport_constraint,
    ];
    let mut out: Vec<Check> = runs.into_par_iter().map(|f| f(seed)).collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

// ---------------------------------------------------------------------------
// configured runs

/// Checks on a user-supplied spacetime and operator: the subprincipal identity,
/// flow conservation, and orbit–transport agreement at seeded points.
pub fn run_configured(m: &Arc<SpacetimeModel>, op: Option<&NHOperatorSpec>, seed: u64) -> Vec<Check> {
    let chart = m.chart().clone();
    let sample = |rng: &mut ChaCha8Rng| chart.sample(rng);
    let dim = m.dim();
    let mut out = Vec::new();
    out.push(run_cases("config/flow", "flow conservation on the configured spacetime", None, 10, &[("q drift", 1e-9), ("momentum residual", 1e-9)], |i| {
        let mut rng = case_rng(seed, 201, i);
        let x = sample(&mut rng);
        let k: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let strip = integrate_strip(m, &PhasePoint::new(&x, &k), (-1.0, 1.0), &StepControl::default()).map_err(err)?;
        Ok(vec![strip.max_q_drift(m).map_err(err)?, strip.max_momentum_residual(m).map_err(err)?])
    }));
    if let Some(p) = op {
        let symbol = p.full_symbol();
        out.push(run_cases("config/psub", "subprincipal identity for the configured operator", None, 100, &[("residual", 1e-9)], |i| {
            let mut rng = case_rng(seed, 202, i);
            let symbol = symbol.as_ref().map_err(err)?;
            let x = sample(&mut rng);
            let k: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
            Ok(vec![nhop::verify_psub_with_symbol(p, symbol, &PhasePoint::new(&x, &k)).map_err(err)?])
        }));
        out.push(run_cases("config/orbit", "orbit-transport agreement for the configured operator", None, 10, &[("relative error", 1e-6)], |i| {
            let mut rng = case_rng(seed, 203, i);
            let x = sample(&mut rng);
            let k: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let strip = integrate_strip(m, &PhasePoint::new(&x, &k), (0.0, 1.0), &StepControl::default()).map_err(err)?;
            let end = strip.lambda_max();
            let w0 = random_cvec(&mut rng, p.rank());
            let orbit = bichar::hamilton_orbit(p, &strip, &w0, end).map_err(err)?;
            let gamma = nhop::weitzenboeck_extract(p);
            let pi = bichar::transport_along(&gamma, &strip, 0.0, end).map_err(err)?;
            let last = orbit.values.last().expect("non-empty");
            Ok(vec![(last - complex(&pi) * &w0).norm() / w0.norm()])
        }));
    }
    out
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

/// Criteria plus properties, sorted by id.
pub fn run_suite(seed: u64) -> SuiteReport {
    let mut checks = run_criteria(seed);
    checks.extend(run_properties(seed));
    checks.sort_by(|a, b| a.id.cmp(&b.id));
    SuiteReport { seed, checks }
}
