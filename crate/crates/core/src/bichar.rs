//! Bicharacteristic strips, the relation `(x,k) ∼ (x′,k′)`, and transport along
//! witnessing null geodesics.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::exprs::ExprError;
use crate::geometry::{GeometryError, PhasePoint, SpacetimeModel};
use crate::nhop::{self, ConnectionForms, NHOperatorSpec};
use crate::ode::{integrate, OdeError, StepControl, Stop};

pub const DEFAULT_TOL_POS: f64 = 1e-6;
pub const DEFAULT_TOL_COV: f64 = 1e-6;
pub const DEFAULT_LAMBDA_MAX: f64 = 20.0;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum BicharError {
    #[error("zero covector: the zero section carries no bicharacteristics")]
    ZeroCovector,
    #[error("affine range [{0}, {1}] must contain 0")]
    InvalidRange(f64, f64),
    #[error("dimension mismatch")]
    DimMismatch,
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StripSample {
    pub lambda: f64,
    pub x: Vec<f64>,
    pub k: Vec<f64>,
    pub xdot: Vec<f64>,
    pub kdot: Vec<f64>,
}

/// Interpolated state on a strip.
#[derive(Clone, Debug)]
pub struct StripState {
    pub x: Vec<f64>,
    pub k: Vec<f64>,
    /// Derivative of the position interpolant.
    pub xdot: Vec<f64>,
}

/// Sampled integral curve of the Hamiltonian field of `q`, with `λ = 0` at the
/// initial phase point. Samples are sorted by `λ`.
#[derive(Clone, Debug)]
pub struct BicharStrip {
    model: Arc<SpacetimeModel>,
    samples: Vec<StripSample>,
    q0: f64,
    requested: (f64, f64),
    truncated_low: bool,
    truncated_high: bool,
}

fn hermite(s: f64, h: f64, p0: f64, m0: f64, p1: f64, m1: f64) -> (f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    let value = (2.0 * s3 - 3.0 * s2 + 1.0) * p0
        + (s3 - 2.0 * s2 + s) * h * m0
        + (-2.0 * s3 + 3.0 * s2) * p1
        + (s3 - s2) * h * m1;
    let slope = ((6.0 * s2 - 6.0 * s) * p0
        + (3.0 * s2 - 4.0 * s + 1.0) * h * m0
        + (-6.0 * s2 + 6.0 * s) * p1
        + (3.0 * s2 - 2.0 * s) * h * m1)
        / h;
    (value, slope)
}

impl BicharStrip {
    pub fn samples(&self) -> &[StripSample] {
        &self.samples
    }

    pub fn q0(&self) -> f64 {
        self.q0
    }

    pub fn requested_range(&self) -> (f64, f64) {
        self.requested
    }

    pub fn lambda_min(&self) -> f64 {
        self.samples[0].lambda
    }

    pub fn lambda_max(&self) -> f64 {
        self.samples[self.samples.len() - 1].lambda
    }

    pub fn truncated_low(&self) -> bool {
        self.truncated_low
    }

    pub fn truncated_high(&self) -> bool {
        self.truncated_high
    }

    pub fn truncated(&self) -> bool {
        self.truncated_low || self.truncated_high
    }

    pub fn dim(&self) -> usize {
        self.samples[0].x.len()
    }

    /// Index `i` with `λ_i ≤ λ ≤ λ_{i+1}`.
    fn segment(&self, lambda: f64) -> usize {
        let n = self.samples.len();
        let i = self.samples.partition_point(|s| s.lambda <= lambda);
        i.saturating_sub(1).min(n.saturating_sub(2))
    }

    /// Cubic Hermite interpolation of `(x, k)` using the Hamiltonian-field
    /// derivatives; `ẋ` is the field at the interpolated state.
    pub fn state_at(&self, lambda: f64) -> StripState {
        let dim = self.dim();
        if self.samples.len() == 1 {
            let s = &self.samples[0];
            return StripState { x: s.x.clone(), k: s.k.clone(), xdot: s.xdot.clone() };
        }
        let i = self.segment(lambda);
        let a = &self.samples[i];
        let b = &self.samples[i + 1];
        let h = b.lambda - a.lambda;
        let s = (lambda - a.lambda) / h;
        let mut x = vec![0.0; dim];
        let mut k = vec![0.0; dim];
        let mut xdot = vec![0.0; dim];
        for m in 0..dim {
            let (v, d) = hermite(s, h, a.x[m], a.xdot[m], b.x[m], b.xdot[m]);
            x[m] = v;
            xdot[m] = d;
            k[m] = hermite(s, h, a.k[m], a.kdot[m], b.k[m], b.kdot[m]).0;
        }
        if s != 0.0 && s != 1.0 {
            let mut field = vec![0.0; dim];
            let mut kdot = vec![0.0; dim];
            if self.model.hamiltonian_into(&x, &k, &mut field, &mut kdot).is_ok() {
                xdot = field;
            }
        } else {
            let knot = if s == 0.0 { a } else { b };
            xdot.copy_from_slice(&knot.xdot);
        }
        StripState { x, k, xdot }
    }

    /// Sample parameters strictly between `a` and `b`, ordered from `a` to `b`.
    pub fn knots_between(&self, a: f64, b: f64) -> Vec<f64> {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let mut out: Vec<f64> = self
            .samples
            .iter()
            .map(|s| s.lambda)
            .filter(|&l| l > lo && l < hi)
            .collect();
        if a > b {
            out.reverse();
        }
        out
    }

    /// Largest `|q(c(λ_i)) - q(c(0))| / (1 + |q(c(0))|)`.
    pub fn max_q_drift(&self, m: &SpacetimeModel) -> Result<f64, GeometryError> {
        let mut worst: f64 = 0.0;
        for s in &self.samples {
            let q = m.q_value(&PhasePoint::new(&s.x, &s.k))?;
            worst = worst.max((q - self.q0).abs() / (1.0 + self.q0.abs()));
        }
        Ok(worst)
    }

    /// Largest `‖k + ½ ẋ^♭‖` over the samples.
    pub fn max_momentum_residual(&self, m: &SpacetimeModel) -> Result<f64, GeometryError> {
        let mut worst: f64 = 0.0;
        for s in &self.samples {
            let flat = m.flat(&s.x, &DVector::from_column_slice(&s.xdot))?;
            let r = DVector::from_column_slice(&s.k) + flat * 0.5;
            worst = worst.max(r.norm());
        }
        Ok(worst)
    }
}

/// Integrates the Hamiltonian flow through `p0` over `range` (which must contain 0).
/// Leaving the chart truncates the strip on that side.
pub fn integrate_strip(
    m: &SpacetimeModel,
    p0: &PhasePoint,
    range: (f64, f64),
    ctrl: &StepControl,
) -> Result<BicharStrip, BicharError> {
    let dim = m.dim();
    if p0.x.len() != dim || p0.k.len() != dim {
        return Err(BicharError::DimMismatch);
    }
    if p0.k.iter().all(|&v| v == 0.0) {
        return Err(BicharError::ZeroCovector);
    }
    if !(range.0 <= 0.0 && range.1 >= 0.0) {
        return Err(BicharError::InvalidRange(range.0, range.1));
    }
    let q0 = m.q_value(p0)?;
    let make = |lambda: f64, y: &[f64]| -> StripSample {
        let mut xdot = vec![0.0; dim];
        let mut kdot = vec![0.0; dim];
        m.hamiltonian_into(&y[..dim], &y[dim..], &mut xdot, &mut kdot)
            .expect("accepted states lie in the chart");
        StripSample { lambda, x: y[..dim].to_vec(), k: y[dim..].to_vec(), xdot, kdot }
    };
    let mut y0 = p0.x.as_slice().to_vec();
    y0.extend_from_slice(p0.k.as_slice());
    let rhs = |_t: f64, y: &[f64], d: &mut [f64]| -> bool {
        let (dx, dk) = d.split_at_mut(dim);
        m.hamiltonian_into(&y[..dim], &y[dim..], dx, dk).is_ok()
    };
    let mut forward = Vec::new();
    let stop_hi = if range.1 > 0.0 {
        integrate(rhs, 0.0, &y0, range.1, ctrl, |t, y| forward.push(make(t, y)))?
    } else {
        Stop::Reached
    };
    let mut backward = Vec::new();
    let stop_lo = if range.0 < 0.0 {
        integrate(rhs, 0.0, &y0, range.0, ctrl, |t, y| backward.push(make(t, y)))?
    } else {
        Stop::Reached
    };
    backward.reverse();
    let mut samples = backward;
    samples.push(make(0.0, &y0));
    samples.extend(forward);
    Ok(BicharStrip {
        model: Arc::new(m.clone()),
        samples,
        q0,
        requested: range,
        truncated_low: stop_lo == Stop::Boundary,
        truncated_high: stop_hi == Stop::Boundary,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelationParams {
    pub tol_pos: f64,
    pub tol_cov: f64,
    pub lambda_max: f64,
    pub step: StepControl,
}

impl Default for RelationParams {
    fn default() -> Self {
        RelationParams {
            tol_pos: DEFAULT_TOL_POS,
            tol_cov: DEFAULT_TOL_COV,
            lambda_max: DEFAULT_LAMBDA_MAX,
            step: StepControl::default(),
        }
    }
}

/// A null geodesic segment witnessing `(x,k) ∼ (x′,k′)`: the strip starts at
/// `(x′,k′)` at `lambda_src` and reaches `(x,k)` at `lambda_dst`.
#[derive(Clone, Debug)]
pub struct WitnessGeodesic {
    pub strip: Arc<BicharStrip>,
    pub lambda_src: f64,
    pub lambda_dst: f64,
    pub pos_residual: f64,
    pub cov_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub lambda: f64,
    pub pos_residual: f64,
    pub cov_residual: f64,
    pub accepted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Related,
    NotRelated,
    /// No witness within the searched range, and the range (or chart) was the limit.
    Unknown,
}

impl Relation {
    pub fn name(self) -> &'static str {
        match self {
            Relation::Related => "related",
            Relation::NotRelated => "not-related",
            Relation::Unknown => "unknown",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RelationOutcome {
    pub relation: Relation,
    pub witness: Option<WitnessGeodesic>,
    pub candidates: Vec<Candidate>,
    pub multiple_witnesses: bool,
    pub range_exhausted: bool,
    pub reason: &'static str,
}

impl RelationOutcome {
    fn simple(relation: Relation, reason: &'static str) -> Self {
        RelationOutcome {
            relation,
            witness: None,
            candidates: Vec::new(),
            multiple_witnesses: false,
            range_exhausted: false,
            reason,
        }
    }
}

fn approach_rate(strip: &BicharStrip, target: &[f64], lambda: f64) -> (f64, StripState) {
    let st = strip.state_at(lambda);
    let f = st.x.iter().zip(target).zip(&st.xdot).map(|((a, b), v)| (a - b) * v).sum();
    (f, st)
}

/// Decides `(x,k) ∼ (x′,k′)` by flowing from `p′` and locating closest approaches to `x`.
pub fn relation_check(
    m: &SpacetimeModel,
    p: &PhasePoint,
    pp: &PhasePoint,
    params: &RelationParams,
) -> Result<RelationOutcome, BicharError> {
    let dim = m.dim();
    if p.x.len() != dim || pp.x.len() != dim || p.k.len() != dim || pp.k.len() != dim {
        return Err(BicharError::DimMismatch);
    }
    if p.k.iter().all(|&v| v == 0.0) || pp.k.iter().all(|&v| v == 0.0) {
        return Err(BicharError::ZeroCovector);
    }
    if !m.is_null(p)? || !m.is_null(pp)? {
        return Ok(RelationOutcome::simple(Relation::NotRelated, "covector is not null"));
    }
    let knorm = p.k.norm();
    if p.x == pp.x {
        let cov = (&p.k - &pp.k).norm();
        if cov <= params.tol_cov * knorm {
            let strip = integrate_strip(m, pp, (0.0, 0.0), &params.step)?;
            let witness =
                WitnessGeodesic { strip: Arc::new(strip), lambda_src: 0.0, lambda_dst: 0.0, pos_residual: 0.0, cov_residual: cov };
            return Ok(RelationOutcome {
                relation: Relation::Related,
                witness: Some(witness),
                candidates: vec![Candidate { lambda: 0.0, pos_residual: 0.0, cov_residual: cov, accepted: true }],
                multiple_witnesses: false,
                range_exhausted: false,
                reason: "coincident points with equal null covectors",
            });
        }
        return Ok(RelationOutcome::simple(Relation::NotRelated, "coincident points with different covectors"));
    }
    let strip = Arc::new(integrate_strip(m, pp, (-params.lambda_max, params.lambda_max), &params.step)?);
    let target = p.x.as_slice();
    let samples = strip.samples();
    let rates: Vec<f64> = samples
        .iter()
        .map(|s| s.x.iter().zip(target).zip(&s.xdot).map(|((a, b), v)| (a - b) * v).sum())
        .collect();
    let mut candidates = Vec::new();
    let mut accepted: Vec<(Candidate, StripState)> = Vec::new();
    for i in 0..samples.len().saturating_sub(1) {
        if !(rates[i] < 0.0 && rates[i + 1] >= 0.0) {
            continue;
        }
        let (mut lo, mut hi) = (samples[i].lambda, samples[i + 1].lambda);
        let mut best = if rates[i + 1] == 0.0 { hi } else { 0.5 * (lo + hi) };
        if rates[i + 1] != 0.0 {
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if approach_rate(&strip, target, mid).0 < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                best = 0.5 * (lo + hi);
                if hi - lo <= 1e-12 {
                    break;
                }
            }
        }
        let st = strip.state_at(best);
        let pos = st.x.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let cov = st.k.iter().zip(p.k.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let ok = pos <= params.tol_pos && cov <= params.tol_cov * knorm;
        let c = Candidate { lambda: best, pos_residual: pos, cov_residual: cov, accepted: ok };
        candidates.push(c);
        if ok {
            accepted.push((c, st));
        }
    }
    if let Some((first, _)) = accepted.first() {
        let witness = WitnessGeodesic {
            strip: strip.clone(),
            lambda_src: 0.0,
            lambda_dst: first.lambda,
            pos_residual: first.pos_residual,
            cov_residual: first.cov_residual,
        };
        return Ok(RelationOutcome {
            relation: Relation::Related,
            witness: Some(witness),
            candidates,
            multiple_witnesses: accepted.len() > 1,
            range_exhausted: false,
            reason: "witness found",
        });
    }
    // Still approaching at either end of the searched range: the verdict is open.
    let open_low = strip.truncated_low() || rates[0] > 0.0;
    let open_high = strip.truncated_high() || rates[rates.len() - 1] < 0.0;
    let exhausted = open_low || open_high;
    Ok(RelationOutcome {
        relation: if exhausted { Relation::Unknown } else { Relation::NotRelated },
        witness: None,
        candidates,
        multiple_witnesses: false,
        range_exhausted: exhausted,
        reason: if exhausted { "search range exhausted" } else { "every closest approach misses" },
    })
}

/// Linear endpoint map of a transport problem, with its condition number.
#[derive(Clone, Debug)]
pub struct Propagator {
    pub matrix: DMatrix<Complex64>,
    pub from: PhasePoint,
    pub to: PhasePoint,
    pub condition: f64,
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn transport_control() -> StepControl {
    StepControl { tol: 1e-13, h_max: 0.05, h_min: 1e-13, h_init: 0.01, max_steps: 5_000_000 }
}

/// Integrates `Y' = F(λ) Y` piecewise between strip knots, so each RK4 step sees a
/// smooth interpolant.
fn integrate_linear<F>(strip: &BicharStrip, from: f64, to: f64, y0: Vec<f64>, mut rhs: F) -> Result<Vec<f64>, BicharError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), BicharError>,
{
    let mut knots = strip.knots_between(from, to);
    knots.push(to);
    let mut y = y0;
    let mut t = from;
    let ctrl = transport_control();
    for &next in &knots {
        if next == t {
            continue;
        }
        let seg = StepControl { h_max: (next - t).abs(), h_init: (next - t).abs(), ..ctrl };
        let mut err = None;
        let mut end = y.clone();
        integrate(
            |l, s, d| match rhs(l, s, d) {
                Ok(()) => true,
                Err(e) => {
                    err = Some(e);
                    false
                }
            },
            t,
            &y,
            next,
            &seg,
            |_, s| end.copy_from_slice(s),
        )?;
        if let Some(e) = err {
            return Err(e);
        }
        y = end;
        t = next;
    }
    Ok(y)
}

/// Solves `Ṡ + Γ_{ẋ(λ)} S = 0`, `S(from) = I`, on the strip interpolant.
pub fn transport_along(gamma: &ConnectionForms, strip: &BicharStrip, from: f64, to: f64) -> Result<DMatrix<f64>, BicharError> {
    let r = gamma.rank();
    let eye = DMatrix::<f64>::identity(r, r);
    if from == to || gamma.is_zero() {
        return Ok(eye);
    }
    let y0: Vec<f64> = eye.as_slice().to_vec();
    let y = integrate_linear(strip, from, to, y0, |l, s, d| {
        let st = strip.state_at(l);
        let g = gamma.contract(&st.x, &st.xdot)?;
        let smat = DMatrix::from_column_slice(r, r, s);
        let ds = -(g * smat);
        d.copy_from_slice(ds.as_slice());
        Ok(())
    })?;
    Ok(DMatrix::from_column_slice(r, r, &y))
}

fn endpoint(strip: &BicharStrip, lambda: f64) -> PhasePoint {
    let st = strip.state_at(lambda);
    PhasePoint::new(&st.x, &st.k)
}

pub fn parallel_transport(gamma: &ConnectionForms, w: &WitnessGeodesic) -> Result<Propagator, BicharError> {
    let s = transport_along(gamma, &w.strip, w.lambda_src, w.lambda_dst)?;
    let condition = condition_number(&s);
    Ok(Propagator {
        matrix: s.map(|v| Complex64::new(v, 0.0)),
        from: endpoint(&w.strip, w.lambda_src),
        to: endpoint(&w.strip, w.lambda_dst),
        condition,
    })
}

/// Samples of a Hamilton orbit, `W(λ)` at strip knots plus the endpoint.
#[derive(Clone, Debug)]
pub struct OrbitSamples {
    pub lambdas: Vec<f64>,
    pub values: Vec<DVector<Complex64>>,
}

/// Solves `Ẇ + i p^sub(c(λ)) W = 0` from `λ = 0` to `lambda_end`.
pub fn hamilton_orbit(
    p: &NHOperatorSpec,
    strip: &BicharStrip,
    w0: &DVector<Complex64>,
    lambda_end: f64,
) -> Result<OrbitSamples, BicharError> {
    let r = p.rank();
    let gamma = nhop::weitzenboeck_extract(p);
    let m = p.spacetime().clone();
    let mut lambdas = vec![0.0];
    let mut values = vec![w0.clone()];
    let mut knots = strip.knots_between(0.0, lambda_end);
    knots.push(lambda_end);
    let mut t = 0.0;
    let mut y: Vec<f64> = w0.iter().flat_map(|c| [c.re, c.im]).collect();
    let i = Complex64::new(0.0, 1.0);
    for &next in &knots {
        if next == t {
            continue;
        }
        y = integrate_linear(strip, t, next, y, |l, s, d| {
            let st = strip.state_at(l);
            let metric = m.metric_at(&st.x)?;
            let psub = nhop::subprincipal_with(&gamma, &metric, &st.x, &st.k)?;
            let w = DVector::from_fn(r, |a, _| Complex64::new(s[2 * a], s[2 * a + 1]));
            let dw = -(psub * w) * i;
            for a in 0..r {
                d[2 * a] = dw[a].re;
                d[2 * a + 1] = dw[a].im;
            }
            Ok(())
        })?;
        t = next;
        lambdas.push(t);
        values.push(DVector::from_fn(r, |a, _| Complex64::new(y[2 * a], y[2 * a + 1])));
    }
    Ok(OrbitSamples { lambdas, values })
}

/// `Z = Π_γ Z0 Π̌_{γ′}ᵀ`: the B factor moves by the propagator of `Γ` along `γ`,
/// the B* factor by the dual-connection propagator along `γ′`.
pub fn product_transport(
    gamma: &ConnectionForms,
    w: &WitnessGeodesic,
    wp: &WitnessGeodesic,
    z0: &DMatrix<Complex64>,
) -> Result<DMatrix<Complex64>, BicharError> {
    let pi = parallel_transport(gamma, w)?.matrix;
    let dual = nhop::dual_connection(gamma);
    let pid = parallel_transport(&dual, wp)?.matrix;
    Ok(pi * z0 * pid.transpose())
}
