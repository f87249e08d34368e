//! Charts, metrics and the scalar principal symbol `q(x,k) = -g^{-1}(k,k)`.
//!
//! Signature is mostly minus. Every model lives in a single global chart.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::exprs::{Expr, ExprError, ExprMatrix, Func};

pub const DEFAULT_TOL_NULL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum GeometryError {
    #[error("point {point:?} lies outside the chart domain")]
    OutsideChart { point: Vec<f64> },
    #[error("metric is singular at {point:?} (det = {det:e})")]
    SingularMetric { point: Vec<f64>, det: f64 },
    #[error("metric at {point:?} has {positive} positive and {negative} negative eigenvalues")]
    BadSignature { point: Vec<f64>, positive: usize, negative: usize },
    #[error("metric is not symmetric at {point:?}")]
    NotSymmetric { point: Vec<f64> },
    #[error("causal order is only available for the built-in conformally flat charts")]
    UnsupportedCausalOrder,
    #[error("invalid spacetime: {0}")]
    Invalid(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpacetimeKind {
    Minkowski,
    Flrw,
    Custom,
}

impl SpacetimeKind {
    pub fn name(self) -> &'static str {
        match self {
            SpacetimeKind::Minkowski => "minkowski",
            SpacetimeKind::Flrw => "flrw",
            SpacetimeKind::Custom => "custom",
        }
    }
}

/// Product of open intervals.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartDomain {
    pub bounds: Vec<(f64, f64)>,
}

impl ChartDomain {
    pub fn unbounded(dim: usize) -> Self {
        ChartDomain { bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); dim] }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.bounds.len()
            && x.iter().zip(&self.bounds).all(|(&v, &(lo, hi))| v > lo && v < hi)
    }

    /// Interior point, biased towards the unit box around the origin.
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.bounds
            .iter()
            .map(|&(a, b)| {
                let mut lo = a.max(-1.0);
                let mut hi = b.min(1.0);
                if lo >= hi {
                    if a.is_finite() {
                        lo = a;
                        hi = b.min(a + 2.0);
                    } else {
                        hi = b;
                        lo = b - 2.0;
                    }
                }
                lo + (hi - lo) * (0.05 + 0.9 * rng.random::<f64>())
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CovectorClass {
    Zero,
    Null,
    Timelike,
    Spacelike,
}

/// `x` is in the causal future of `x′` (`Future`), its past, both (`Coincident`), or neither.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CausalOrder {
    Future,
    Past,
    Coincident,
    Unrelated,
}

impl CausalOrder {
    pub fn in_future(self) -> bool {
        matches!(self, CausalOrder::Future | CausalOrder::Coincident)
    }

    pub fn in_past(self) -> bool {
        matches!(self, CausalOrder::Past | CausalOrder::Coincident)
    }

    pub fn name(self) -> &'static str {
        match self {
            CausalOrder::Future => "future",
            CausalOrder::Past => "past",
            CausalOrder::Coincident => "diagonal",
            CausalOrder::Unrelated => "none",
        }
    }
}

/// A point of the cotangent bundle.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint {
    pub x: DVector<f64>,
    pub k: DVector<f64>,
}

impl PhasePoint {
    pub fn new(x: &[f64], k: &[f64]) -> Self {
        PhasePoint { x: DVector::from_column_slice(x), k: DVector::from_column_slice(k) }
    }

    pub fn flipped(&self) -> Self {
        PhasePoint { x: self.x.clone(), k: -&self.k }
    }
}

#[derive(Clone, Debug)]
pub struct MetricPair {
    pub low: DMatrix<f64>,
    pub inv: DMatrix<f64>,
}

/// Christoffel symbols `Γ^λ_{μν}` stored as `[λ][μ][ν]`.
#[derive(Clone, Debug)]
pub struct Christoffel {
    dim: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, l: usize, m: usize, n: usize) -> f64 {
        self.data[(l * self.dim + m) * self.dim + n]
    }
}

#[derive(Clone)]
struct Symbolic {
    inv: ExprMatrix,
    abs_det: Expr,
    christoffel: Vec<Expr>,
}

#[derive(Clone)]
pub struct SpacetimeModel {
    dim: usize,
    kind: SpacetimeKind,
    g_low: ExprMatrix,
    dg_low: Vec<ExprMatrix>,
    chart: ChartDomain,
    time_axis: usize,
    tol_null: f64,
    constant: Option<MetricPair>,
    scale_factor: Option<Expr>,
    symbolic: OnceLock<Symbolic>,
}

impl std::fmt::Debug for SpacetimeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpacetimeModel")
            .field("kind", &self.kind)
            .field("dim", &self.dim)
            .field("chart", &self.chart)
            .finish()
    }
}

fn minkowski_matrix(dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| match (i, j) {
        (0, 0) => 1.0,
        (i, j) if i == j => -1.0,
        _ => 0.0,
    })
}

impl SpacetimeModel {
    pub fn minkowski(dim: usize) -> Result<Self, GeometryError> {
        if !(2..=4).contains(&dim) {
            return Err(GeometryError::Invalid(format!("Minkowski dimension {dim} not in 2..=4")));
        }
        let eta = minkowski_matrix(dim);
        Self::build(
            SpacetimeKind::Minkowski,
            ExprMatrix::from_constant(&eta),
            ChartDomain::unbounded(dim),
            0,
            None,
        )
    }

    /// Spatially flat FLRW in conformal time, `g = a(x0)^2 η`, on the chart
    /// `x0 ∈ (-4, 4)`.
    pub fn flrw(dim: usize, scale_factor: Expr) -> Result<Self, GeometryError> {
        let mut chart = ChartDomain::unbounded(dim);
        chart.bounds[0] = (-4.0, 4.0);
        Self::flrw_with_chart(dim, scale_factor, chart)
    }

    pub fn flrw_with_chart(dim: usize, scale_factor: Expr, chart: ChartDomain) -> Result<Self, GeometryError> {
        if !(2..=4).contains(&dim) {
            return Err(GeometryError::Invalid(format!("FLRW dimension {dim} not in 2..=4")));
        }
        if scale_factor.max_var().is_some_and(|v| v > 0) {
            return Err(GeometryError::Invalid("scale factor may depend on x0 only".into()));
        }
        let a2 = Expr::powi(scale_factor.clone(), 2);
        let diag: Vec<Expr> =
            (0..dim).map(|i| if i == 0 { a2.clone() } else { Expr::neg(a2.clone()) }).collect();
        Self::build(SpacetimeKind::Flrw, ExprMatrix::diagonal(&diag), chart, 0, Some(scale_factor))
    }

    /// `a(η) = exp(H η)`.
    pub fn flrw_exponential(dim: usize, hubble: f64) -> Result<Self, GeometryError> {
        let a = Expr::call(Func::Exp, Expr::mul(Expr::num(hubble), Expr::var(0)));
        Self::flrw(dim, a)
    }

    pub fn custom(g_low: ExprMatrix, chart: ChartDomain, time_axis: usize) -> Result<Self, GeometryError> {
        let dim = g_low.nrows();
        if g_low.ncols() != dim || dim < 2 {
            return Err(GeometryError::Invalid("metric must be a square matrix of size >= 2".into()));
        }
        if chart.bounds.len() != dim {
            return Err(GeometryError::Invalid("chart bounds do not match the dimension".into()));
        }
        if time_axis >= dim {
            return Err(GeometryError::Invalid(format!("time axis {time_axis} out of range")));
        }
        Self::build(SpacetimeKind::Custom, g_low, chart, time_axis, None)
    }

    fn build(
        kind: SpacetimeKind,
        g_low: ExprMatrix,
        chart: ChartDomain,
        time_axis: usize,
        scale_factor: Option<Expr>,
    ) -> Result<Self, GeometryError> {
        let dim = g_low.nrows();
        if let Some(v) = g_low.max_var() {
            if v >= dim {
                return Err(GeometryError::Invalid(format!("metric references x{v} in a {dim}-dimensional chart")));
            }
        }
        for (i, &(lo, hi)) in chart.bounds.iter().enumerate() {
            if !(lo < hi) {
                return Err(GeometryError::Invalid(format!("empty chart interval for x{i}")));
            }
        }
        let dg_low = (0..dim).map(|m| g_low.diff(m)).collect();
        let constant = if g_low.is_constant() {
            let low = g_low.eval(&[])?;
            let inv = low
                .clone()
                .try_inverse()
                .ok_or(GeometryError::SingularMetric { point: vec![], det: 0.0 })?;
            Some(MetricPair { low, inv })
        } else {
            None
        };
        let model = SpacetimeModel {
            dim,
            kind,
            g_low,
            dg_low,
            chart,
            time_axis,
            tol_null: DEFAULT_TOL_NULL,
            constant,
            scale_factor,
            symbolic: OnceLock::new(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_tol_null(mut self, tol: f64) -> Self {
        self.tol_null = tol;
        self
    }

    /// Symmetry, nondegeneracy and signature at the chart centre plus seeded samples.
    fn validate(&self) -> Result<(), GeometryError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut points = vec![self.chart.sample(&mut rng)];
        points.extend((0..16).map(|_| self.chart.sample(&mut rng)));
        for x in points {
            let g = self.g_low.eval(&x)?;
            let scale = g.amax().max(1.0);
            if (&g - g.transpose()).amax() > 1e-12 * scale {
                return Err(GeometryError::NotSymmetric { point: x });
            }
            let det = g.determinant();
            if det.abs() < 1e-14 {
                return Err(GeometryError::SingularMetric { point: x, det });
            }
            let eig = SymmetricEigen::new(g).eigenvalues;
            let positive = eig.iter().filter(|&&e| e > 0.0).count();
            let negative = eig.iter().filter(|&&e| e < 0.0).count();
            if positive != 1 || negative != self.dim - 1 {
                return Err(GeometryError::BadSignature { point: x, positive, negative });
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> SpacetimeKind {
        self.kind
    }

    pub fn chart(&self) -> &ChartDomain {
        &self.chart
    }

    pub fn time_axis(&self) -> usize {
        self.time_axis
    }

    pub fn tol_null(&self) -> f64 {
        self.tol_null
    }

    pub fn scale_factor(&self) -> Option<&Expr> {
        self.scale_factor.as_ref()
    }

    pub fn g_low_expr(&self) -> &ExprMatrix {
        &self.g_low
    }

    pub fn is_constant(&self) -> bool {
        self.constant.is_some()
    }

    fn symbolic(&self) -> &Symbolic {
        self.symbolic.get_or_init(|| {
            let n = self.dim;
            let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || self.g_low.get(i, j).is_zero()));
            let inv = if diagonal {
                ExprMatrix::from_fn(n, n, |i, j| {
                    if i == j {
                        Expr::div(Expr::one(), self.g_low.get(i, i).clone())
                    } else {
                        Expr::zero()
                    }
                })
            } else {
                self.g_low.inverse()
            };
            // Lorentzian signature fixes the sign of det g to (-1)^{n-1}.
            let det = self.g_low.det();
            let abs_det = if n % 2 == 0 { Expr::neg(det) } else { det };
            let half = Expr::num(0.5);
            let mut christoffel = vec![Expr::zero(); n * n * n];
            for l in 0..n {
                for m in 0..n {
                    for v in m..n {
                        let e = Expr::sum((0..n).map(|s| {
                            let bracket = Expr::sub(
                                Expr::add(self.dg_low[m].get(s, v).clone(), self.dg_low[v].get(s, m).clone()),
                                self.dg_low[s].get(m, v).clone(),
                            );
                            Expr::mul(inv.get(l, s).clone(), bracket)
                        }));
                        let e = Expr::mul(half.clone(), e);
                        christoffel[(l * n + m) * n + v] = e.clone();
                        christoffel[(l * n + v) * n + m] = e;
                    }
                }
            }
            Symbolic { inv, abs_det, christoffel }
        })
    }

    /// `g^{μν}` as expressions.
    pub fn g_inv_expr(&self) -> &ExprMatrix {
        &self.symbolic().inv
    }

    /// `|det g|` as an expression, i.e. `-det g` in even dimension.
    pub fn abs_det_expr(&self) -> &Expr {
        &self.symbolic().abs_det
    }

    /// `Γ^λ_{μν}` as an expression.
    pub fn christoffel_expr(&self, l: usize, m: usize, n: usize) -> &Expr {
        let d = self.dim;
        &self.symbolic().christoffel[(l * d + m) * d + n]
    }

    fn check_point(&self, x: &[f64]) -> Result<(), GeometryError> {
        if self.chart.contains(x) {
            Ok(())
        } else {
            Err(GeometryError::OutsideChart { point: x.to_vec() })
        }
    }

    pub fn metric_at(&self, x: &[f64]) -> Result<MetricPair, GeometryError> {
        self.check_point(x)?;
        if let Some(c) = &self.constant {
            return Ok(c.clone());
        }
        let low = self.g_low.eval(x)?;
        let det = low.determinant();
        if !(det.abs() >= 1e-14) {
            return Err(GeometryError::SingularMetric { point: x.to_vec(), det });
        }
        let inv = low
            .clone()
            .try_inverse()
            .ok_or(GeometryError::SingularMetric { point: x.to_vec(), det })?;
        Ok(MetricPair { low, inv })
    }

    /// `∂_μ g_{αβ}` for each μ.
    pub fn metric_derivs_at(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>, GeometryError> {
        self.check_point(x)?;
        if self.constant.is_some() {
            return Ok(vec![DMatrix::zeros(self.dim, self.dim); self.dim]);
        }
        self.dg_low.iter().map(|d| d.eval(x).map_err(Into::into)).collect()
    }

    /// `∂_μ g^{αβ} = -g^{-1} (∂_μ g) g^{-1}` for each μ.
    pub fn inverse_metric_derivs_at(&self, x: &[f64], metric: &MetricPair) -> Result<Vec<DMatrix<f64>>, GeometryError> {
        Ok(self
            .metric_derivs_at(x)?
            .iter()
            .map(|d| -(&metric.inv * d * &metric.inv))
            .collect())
    }

    pub fn christoffel_at(&self, x: &[f64]) -> Result<Christoffel, GeometryError> {
        let n = self.dim;
        let metric = self.metric_at(x)?;
        let dg = self.metric_derivs_at(x)?;
        let mut data = vec![0.0; n * n * n];
        if self.constant.is_none() {
            for l in 0..n {
                for m in 0..n {
                    for v in m..n {
                        let mut acc = 0.0;
                        for s in 0..n {
                            acc += metric.inv[(l, s)] * (dg[m][(s, v)] + dg[v][(s, m)] - dg[s][(m, v)]);
                        }
                        data[(l * n + m) * n + v] = 0.5 * acc;
                        data[(l * n + v) * n + m] = 0.5 * acc;
                    }
                }
            }
        }
        Ok(Christoffel { dim: n, data })
    }

    pub fn q_value(&self, p: &PhasePoint) -> Result<f64, GeometryError> {
        let metric = self.metric_at(p.x.as_slice())?;
        Ok(-(p.k.dot(&(&metric.inv * &p.k))))
    }

    pub fn is_null_value(&self, q: f64, k: &DVector<f64>) -> bool {
        let kk = k.norm_squared();
        kk > 0.0 && q.abs() <= self.tol_null * kk
    }

    pub fn classify(&self, p: &PhasePoint) -> Result<CovectorClass, GeometryError> {
        let q = self.q_value(p)?;
        Ok(if p.k.iter().all(|&v| v == 0.0) {
            CovectorClass::Zero
        } else if self.is_null_value(q, &p.k) {
            CovectorClass::Null
        } else if q < 0.0 {
            CovectorClass::Timelike
        } else {
            CovectorClass::Spacelike
        })
    }

    pub fn is_null(&self, p: &PhasePoint) -> Result<bool, GeometryError> {
        Ok(self.classify(p)? == CovectorClass::Null)
    }

    /// Writes `(ẋ, k̇)` of the Hamiltonian field of `q` at `(x, k)` into `out`.
    pub fn hamiltonian_into(&self, x: &[f64], k: &[f64], xdot: &mut [f64], kdot: &mut [f64]) -> Result<(), GeometryError> {
        let n = self.dim;
        if let Some(c) = &self.constant {
            self.check_point(x)?;
            for m in 0..n {
                let mut acc = 0.0;
                for v in 0..n {
                    acc += c.inv[(m, v)] * k[v];
                }
                xdot[m] = -2.0 * acc;
                kdot[m] = 0.0;
            }
            return Ok(());
        }
        let metric = self.metric_at(x)?;
        let kv = DVector::from_column_slice(k);
        let gk = &metric.inv * &kv;
        for m in 0..n {
            xdot[m] = -2.0 * gk[m];
        }
        // k_α k_β ∂_μ g^{αβ} = -(g^{-1}k)ᵀ ∂_μ g (g^{-1}k)
        let dg = self.metric_derivs_at(x)?;
        for m in 0..n {
            kdot[m] = -(gk.dot(&(&dg[m] * &gk)));
        }
        Ok(())
    }

    pub fn hamiltonian_field(&self, p: &PhasePoint) -> Result<(DVector<f64>, DVector<f64>), GeometryError> {
        let n = self.dim;
        let mut xdot = DVector::zeros(n);
        let mut kdot = DVector::zeros(n);
        self.hamiltonian_into(p.x.as_slice(), p.k.as_slice(), xdot.as_mut_slice(), kdot.as_mut_slice())?;
        Ok((xdot, kdot))
    }

    pub fn sharp(&self, x: &[f64], k: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
        Ok(self.metric_at(x)?.inv * k)
    }

    pub fn flat(&self, x: &[f64], v: &DVector<f64>) -> Result<DVector<f64>, GeometryError> {
        Ok(self.metric_at(x)?.low * v)
    }

    /// Flat-cone comparison of coordinate differences; relative slack 1e-9 absorbs
    /// roundoff on exactly null separations.
    pub fn causal_order(&self, x: &[f64], xp: &[f64]) -> Result<CausalOrder, GeometryError> {
        if self.kind == SpacetimeKind::Custom {
            return Err(GeometryError::UnsupportedCausalOrder);
        }
        let t = self.time_axis;
        let dt = x[t] - xp[t];
        let ds2: f64 = (0..self.dim).filter(|&i| i != t).map(|i| (x[i] - xp[i]).powi(2)).sum();
        if dt == 0.0 && ds2 == 0.0 {
            return Ok(CausalOrder::Coincident);
        }
        let dt2 = dt * dt;
        if dt != 0.0 && dt2 >= ds2 - 1e-9 * (dt2 + ds2) {
            return Ok(if dt > 0.0 { CausalOrder::Future } else { CausalOrder::Past });
        }
        Ok(CausalOrder::Unrelated)
    }

    pub fn metric_density_power(&self, x: &[f64], alpha: f64) -> Result<f64, GeometryError> {
        let metric = self.metric_at(x)?;
        let det = metric.low.determinant();
        let abs = if self.dim % 2 == 0 { -det } else { det };
        if abs <= 0.0 {
            return Err(GeometryError::SingularMetric { point: x.to_vec(), det });
        }
        Ok(abs.powf(alpha))
    }
}
