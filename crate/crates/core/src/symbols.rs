//! Matrix symbols of differential operators in a fixed chart and frame.
//!
//! A [`PolySymbol`] stores `a(x, ξ) = Σ_α c_α(x) ξ^α` with complex matrix
//! coefficients. The operator `Σ A_α ∂^α` corresponds to `c_α = i^{|α|} A_α`,
//! so `∂_μ` has symbol `i ξ_μ` and `∂_μ ∂_ν` has symbol `-ξ_μ ξ_ν`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::exprs::{Expr, ExprError, ExprMatrix};

pub const SAMPLE_SEED: u64 = 0x51_4d_b0_15;
pub const SAMPLE_COUNT: usize = 20;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SymbolError {
    #[error("rank mismatch: {0} vs {1}")]
    RankMismatch(usize, usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("multi-index {0} exceeds the declared order {1}")]
    OrderExceeded(MultiIndex, usize),
    #[error("principal part is not a scalar multiple of the identity")]
    NonScalarPrincipal,
    #[error("frame change matrix is singular at {0:?}")]
    SingularFrame(Vec<f64>),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(pub Vec<u8>);

impl MultiIndex {
    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    pub fn unit(dim: usize, mu: usize) -> Self {
        let mut v = vec![0; dim];
        v[mu] = 1;
        MultiIndex(v)
    }

    /// `e_μ + e_ν`.
    pub fn pair(dim: usize, mu: usize, nu: usize) -> Self {
        let mut v = vec![0; dim];
        v[mu] += 1;
        v[nu] += 1;
        MultiIndex(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn order(&self) -> usize {
        self.0.iter().map(|&a| a as usize).sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn checked_sub(&self, other: &Self) -> Option<Self> {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| a.checked_sub(b))
            .collect::<Option<Vec<_>>>()
            .map(MultiIndex)
    }

    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&a| (1..=a as u32).product::<u32>() as f64).product()
    }

    /// All β with β ≤ α componentwise.
    pub fn below(&self) -> Vec<MultiIndex> {
        let mut out = vec![MultiIndex(Vec::with_capacity(self.dim()))];
        for &a in &self.0 {
            out = out
                .into_iter()
                .flat_map(|b| {
                    (0..=a).map(move |v| {
                        let mut c = b.0.clone();
                        c.push(v);
                        MultiIndex(c)
                    })
                })
                .collect();
        }
        out
    }

    /// All multi-indices of the given total order.
    pub fn all_of_order(dim: usize, order: usize) -> Vec<MultiIndex> {
        let full = MultiIndex(vec![order as u8; dim]);
        full.below().into_iter().filter(|b| b.order() == order).collect()
    }

    pub fn monomial(&self, xi: &[f64]) -> f64 {
        self.0.iter().zip(xi).map(|(&a, &v)| v.powi(a as i32)).product()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// Complex matrix of expressions, split into real and imaginary parts.
#[derive(Clone, Debug, PartialEq)]
pub struct CExprMatrix {
    pub re: ExprMatrix,
    pub im: ExprMatrix,
}

impl CExprMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CExprMatrix { re: ExprMatrix::zeros(rows, cols), im: ExprMatrix::zeros(rows, cols) }
    }

    pub fn identity(n: usize) -> Self {
        Self::real(ExprMatrix::identity(n))
    }

    pub fn real(re: ExprMatrix) -> Self {
        let im = ExprMatrix::zeros(re.nrows(), re.ncols());
        CExprMatrix { re, im }
    }

    pub fn scalar(rank: usize, re: Expr, im: Expr) -> Self {
        let id = ExprMatrix::identity(rank);
        CExprMatrix { re: id.scale(&re), im: id.scale(&im) }
    }

    pub fn nrows(&self) -> usize {
        self.re.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.re.ncols()
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn add(&self, o: &Self) -> Self {
        CExprMatrix { re: self.re.add(&o.re), im: self.im.add(&o.im) }
    }

    pub fn sub(&self, o: &Self) -> Self {
        CExprMatrix { re: self.re.sub(&o.re), im: self.im.sub(&o.im) }
    }

    pub fn mul(&self, o: &Self) -> Self {
        CExprMatrix {
            re: self.re.mul(&o.re).sub(&self.im.mul(&o.im)),
            im: self.re.mul(&o.im).add(&self.im.mul(&o.re)),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        let e = Expr::num(s);
        CExprMatrix { re: self.re.scale(&e), im: self.im.scale(&e) }
    }

    /// Multiplies by `i^n`.
    pub fn times_i_pow(&self, n: usize) -> Self {
        match n % 4 {
            0 => self.clone(),
            1 => CExprMatrix { re: self.im.neg(), im: self.re.clone() },
            2 => CExprMatrix { re: self.re.neg(), im: self.im.neg() },
            _ => CExprMatrix { re: self.im.clone(), im: self.re.neg() },
        }
    }

    pub fn diff(&self, idx: usize) -> Self {
        CExprMatrix { re: self.re.diff(idx), im: self.im.diff(idx) }
    }

    pub fn transpose(&self) -> Self {
        CExprMatrix { re: self.re.transpose(), im: self.im.transpose() }
    }

    pub fn neg(&self) -> Self {
        CExprMatrix { re: self.re.neg(), im: self.im.neg() }
    }

    pub fn eval(&self, x: &[f64]) -> Result<DMatrix<Complex64>, ExprError> {
        let re = self.re.eval(x)?;
        let im = self.im.eval(x)?;
        Ok(DMatrix::from_fn(re.nrows(), re.ncols(), |i, j| Complex64::new(re[(i, j)], im[(i, j)])))
    }
}

/// Polynomial matrix symbol of declared order.
#[derive(Clone, Debug, PartialEq)]
pub struct PolySymbol {
    dim: usize,
    rank: usize,
    order: usize,
    coeffs: BTreeMap<MultiIndex, CExprMatrix>,
}

impl PolySymbol {
    pub fn zero(dim: usize, rank: usize, order: usize) -> Self {
        PolySymbol { dim, rank, order, coeffs: BTreeMap::new() }
    }

    /// Order-zero symbol `c(x)`.
    pub fn multiplication(dim: usize, c: CExprMatrix) -> Self {
        let mut s = Self::zero(dim, c.nrows(), 0);
        s.coeffs.insert(MultiIndex::zero(dim), c);
        s
    }

    /// Builds the symbol of `Σ A_α ∂^α` from operator coefficients.
    pub fn from_operator<I>(dim: usize, rank: usize, order: usize, terms: I) -> Result<Self, SymbolError>
    where
        I: IntoIterator<Item = (MultiIndex, CExprMatrix)>,
    {
        let mut s = Self::zero(dim, rank, order);
        for (alpha, a) in terms {
            let c = a.times_i_pow(alpha.order());
            s.add_term(alpha, c)?;
        }
        Ok(s)
    }

    /// Adds `c ξ^α` to the symbol.
    pub fn add_term(&mut self, alpha: MultiIndex, c: CExprMatrix) -> Result<(), SymbolError> {
        if alpha.dim() != self.dim {
            return Err(SymbolError::DimMismatch(alpha.dim(), self.dim));
        }
        if alpha.order() > self.order {
            return Err(SymbolError::OrderExceeded(alpha, self.order));
        }
        if c.nrows() != self.rank || c.ncols() != self.rank {
            return Err(SymbolError::RankMismatch(c.nrows(), self.rank));
        }
        if c.is_zero() {
            return Ok(());
        }
        let slot = self.coeffs.entry(alpha).or_insert_with(|| CExprMatrix::zeros(c.nrows(), c.ncols()));
        *slot = slot.add(&c);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Symbol coefficients `c_α` of `ξ^α`.
    pub fn coefficients(&self) -> &BTreeMap<MultiIndex, CExprMatrix> {
        &self.coeffs
    }

    /// Operator coefficients `A_α = (-i)^{|α|} c_α`.
    pub fn operator_coefficients(&self) -> BTreeMap<MultiIndex, CExprMatrix> {
        self.coeffs
            .iter()
            .map(|(a, c)| (a.clone(), c.times_i_pow(3 * a.order())))
            .collect()
    }

    pub fn evaluate(&self, x: &[f64], xi: &[f64]) -> Result<DMatrix<Complex64>, SymbolError> {
        let mut out = DMatrix::zeros(self.rank, self.rank);
        for (alpha, c) in &self.coeffs {
            out += c.eval(x)? * Complex64::new(alpha.monomial(xi), 0.0);
        }
        Ok(out)
    }

    /// Homogeneous part of degree `j`, keeping the declared order.
    pub fn degree_part(&self, j: usize) -> PolySymbol {
        PolySymbol {
            dim: self.dim,
            rank: self.rank,
            order: self.order,
            coeffs: self.coeffs.iter().filter(|(a, _)| a.order() == j).map(|(a, c)| (a.clone(), c.clone())).collect(),
        }
    }

    pub fn principal(&self) -> PolySymbol {
        self.degree_part(self.order)
    }

    /// `∂a/∂ξ_μ`, declared order lowered by one.
    pub fn xi_derivative(&self, mu: usize) -> PolySymbol {
        let mut out = PolySymbol::zero(self.dim, self.rank, self.order.saturating_sub(1));
        let e = MultiIndex::unit(self.dim, mu);
        for (alpha, c) in &self.coeffs {
            if let Some(lower) = alpha.checked_sub(&e) {
                out.coeffs.insert(lower, c.scale(alpha.0[mu] as f64));
            }
        }
        out
    }

    /// `a^r = a + (i/2) ∂²a/∂x^μ∂ξ_μ`, keeping degrees `m` and `m-1`.
    pub fn refined_principal(&self) -> GradedSymbol {
        let m = self.order;
        let top = self.principal();
        let mut next = self.degree_part(m.wrapping_sub(1));
        if m == 0 {
            next = PolySymbol::zero(self.dim, self.rank, 0);
        }
        for (alpha, c) in top.coeffs.iter() {
            for mu in 0..self.dim {
                if alpha.0[mu] == 0 {
                    continue;
                }
                let lower = alpha.checked_sub(&MultiIndex::unit(self.dim, mu)).unwrap();
                let term = c.diff(mu).scale(0.5 * alpha.0[mu] as f64).times_i_pow(1);
                next.add_term(lower, term).expect("degree below the declared order");
            }
        }
        GradedSymbol { top: m, parts: vec![top, next] }
    }

    /// Degree `m-1` layer of the refined principal symbol.
    pub fn subprincipal(&self) -> PolySymbol {
        self.refined_principal().parts.swap_remove(1)
    }

    /// `b = Σ_β ((-i)^{|β|}/β!) ∂_ξ^β a ∂_x^β a′`, exact for polynomial symbols;
    /// terms of ξ-degree below `drop_below` are discarded.
    pub fn compose(&self, other: &PolySymbol, drop_below: usize) -> Result<PolySymbol, SymbolError> {
        if self.rank != other.rank {
            return Err(SymbolError::RankMismatch(self.rank, other.rank));
        }
        if self.dim != other.dim {
            return Err(SymbolError::DimMismatch(self.dim, other.dim));
        }
        let mut out = PolySymbol::zero(self.dim, self.rank, self.order + other.order);
        let mut derivs: HashMap<(MultiIndex, MultiIndex), CExprMatrix> = HashMap::new();
        for (alpha, c) in &self.coeffs {
            for beta in alpha.below() {
                let rest = alpha.checked_sub(&beta).unwrap();
                // ∂_ξ^β ξ^α = α!/(α-β)! ξ^{α-β}
                let factor = alpha.factorial() / rest.factorial() / beta.factorial();
                for (gamma, c2) in &other.coeffs {
                    let target = rest.add(gamma);
                    if target.order() < drop_below {
                        continue;
                    }
                    let d = derivs
                        .entry((gamma.clone(), beta.clone()))
                        .or_insert_with(|| x_derivative(c2, &beta))
                        .clone();
                    if d.is_zero() {
                        continue;
                    }
                    let term = c.mul(&d).scale(factor).times_i_pow(3 * beta.order());
                    out.add_term(target, term)?;
                }
            }
        }
        Ok(out)
    }

    /// `ǎ(x, ξ) = a(x, -ξ)ᵀ`.
    pub fn dual(&self) -> PolySymbol {
        PolySymbol {
            dim: self.dim,
            rank: self.rank,
            order: self.order,
            coeffs: self
                .coeffs
                .iter()
                .map(|(a, c)| {
                    let t = c.transpose();
                    (a.clone(), if a.order() % 2 == 1 { t.neg() } else { t })
                })
                .collect(),
        }
    }

    pub fn add(&self, other: &PolySymbol) -> Result<PolySymbol, SymbolError> {
        if self.rank != other.rank {
            return Err(SymbolError::RankMismatch(self.rank, other.rank));
        }
        let mut out = self.clone();
        out.order = self.order.max(other.order);
        for (a, c) in &other.coeffs {
            out.add_term(a.clone(), c.clone())?;
        }
        Ok(out)
    }

    /// Largest coefficientwise difference over the given points, relative to `1 + |c|`.
    pub fn max_coeff_diff(&self, other: &PolySymbol, points: &[Vec<f64>]) -> Result<f64, SymbolError> {
        let mut keys: Vec<&MultiIndex> = self.coeffs.keys().chain(other.coeffs.keys()).collect();
        keys.sort();
        keys.dedup();
        let zero = CExprMatrix::zeros(self.rank, self.rank);
        let mut worst: f64 = 0.0;
        for key in keys {
            let a = self.coeffs.get(key).unwrap_or(&zero);
            let b = other.coeffs.get(key).unwrap_or(&zero);
            for x in points {
                let va = a.eval(x)?;
                let vb = b.eval(x)?;
                worst = worst.max((&va - &vb).norm() / (1.0 + va.norm()));
            }
        }
        Ok(worst)
    }

    /// True when the principal coefficients are `b(x) I` at all sample points.
    pub fn principal_is_scalar(&self, points: &[Vec<f64>]) -> Result<bool, SymbolError> {
        for c in self.principal().coeffs.values() {
            for x in points {
                let v = c.eval(x)?;
                let b = v[(0, 0)];
                let scalar = DMatrix::<Complex64>::identity(self.rank, self.rank) * b;
                if (&v - scalar).norm() > 1e-12 * (1.0 + v.norm()) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

fn x_derivative(c: &CExprMatrix, beta: &MultiIndex) -> CExprMatrix {
    let mut d = c.clone();
    for (mu, &n) in beta.0.iter().enumerate() {
        for _ in 0..n {
            d = d.diff(mu);
        }
    }
    d
}

/// Homogeneous layers `a_top, a_{top-1}, …`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradedSymbol {
    pub top: usize,
    pub parts: Vec<PolySymbol>,
}

impl GradedSymbol {
    pub fn evaluate(&self, x: &[f64], xi: &[f64]) -> Result<DMatrix<Complex64>, SymbolError> {
        let mut acc = self.parts[0].evaluate(x, xi)?;
        for p in &self.parts[1..] {
            acc += p.evaluate(x, xi)?;
        }
        Ok(acc)
    }

    pub fn to_poly(&self) -> PolySymbol {
        let mut acc = self.parts[0].clone();
        for p in &self.parts[1..] {
            acc = acc.add(p).expect("layers share a rank");
        }
        acc
    }
}

/// Seeded `(x, ξ)` pairs with `x ∈ [-1, 1]^dim` and `|ξ| ∈ [0.5, 5]`.
pub fn sample_points(dim: usize, n: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut xi: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-3);
            let target = rng.random_range(0.5..5.0);
            xi.iter_mut().for_each(|v| *v *= target / norm);
            (x, xi)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct FrameChangeReport {
    pub transformed: PolySymbol,
    /// Largest `‖M(a^r + iΓ_V) - (a′^r + iΓ′_V)M‖ / (1 + ‖M a^r‖)` over the samples.
    pub residual: f64,
    pub samples: usize,
}

/// Transforms `a` to the frame `e′ = e M^{-1}`, i.e. `a′ = M ∘ a ∘ M^{-1}`, and checks
/// that `a^r + iΓ_{X_b}` transforms as a section. `gamma` holds the connection forms
/// in the old frame (zero when absent).
pub fn frame_change_refined(
    a: &PolySymbol,
    m: &ExprMatrix,
    gamma: Option<&[ExprMatrix]>,
) -> Result<FrameChangeReport, SymbolError> {
    let dim = a.dim;
    let rank = a.rank;
    if m.nrows() != rank || m.ncols() != rank {
        return Err(SymbolError::RankMismatch(m.nrows(), rank));
    }
    let samples = sample_points(dim, SAMPLE_COUNT, SAMPLE_SEED);
    let xs: Vec<Vec<f64>> = samples.iter().map(|(x, _)| x.clone()).collect();
    if !a.principal_is_scalar(&xs)? {
        return Err(SymbolError::NonScalarPrincipal);
    }
    let det = m.det();
    for x in &xs {
        if det.eval(x)?.abs() < 1e-12 {
            return Err(SymbolError::SingularFrame(x.clone()));
        }
    }
    let m_inv = m.inverse();
    let left = PolySymbol::multiplication(dim, CExprMatrix::real(m.clone()));
    let right = PolySymbol::multiplication(dim, CExprMatrix::real(m_inv.clone()));
    let transformed = left.compose(a, 0)?.compose(&right, 0)?;

    let ar = a.refined_principal();
    let ar2 = transformed.refined_principal();
    let b = a.principal();
    let dm: Vec<ExprMatrix> = (0..dim).map(|mu| m.diff(mu)).collect();
    let i = Complex64::new(0.0, 1.0);
    let mut worst: f64 = 0.0;
    for (x, xi) in &samples {
        let mx = m.eval(x)?.map(|v| Complex64::new(v, 0.0));
        let mix = m_inv.eval(x)?.map(|v| Complex64::new(v, 0.0));
        // V^μ = ∂b/∂ξ_μ, read off the (0,0) entry of the scalar principal part.
        let v: Vec<Complex64> = (0..dim)
            .map(|mu| b.xi_derivative(mu).evaluate(x, xi).map(|e| e[(0, 0)]))
            .collect::<Result<_, _>>()?;
        let mut gv = DMatrix::<Complex64>::zeros(rank, rank);
        let mut vdm = DMatrix::<Complex64>::zeros(rank, rank);
        for mu in 0..dim {
            if let Some(g) = gamma {
                gv += g[mu].eval(x)?.map(|e| Complex64::new(e, 0.0)) * v[mu];
            }
            vdm += dm[mu].eval(x)?.map(|e| Complex64::new(e, 0.0)) * v[mu];
        }
        let gv2 = (&mx * &gv - vdm) * &mix;
        let lhs_inner = ar.evaluate(x, xi)? + &gv * i;
        let lhs = &mx * &lhs_inner;
        let rhs = (ar2.evaluate(x, xi)? + gv2 * i) * &mx;
        let scale = 1.0 + (&mx * ar.evaluate(x, xi)?).norm();
        worst = worst.max((lhs - rhs).norm() / scale);
    }
    Ok(FrameChangeReport { transformed, residual: worst, samples: samples.len() })
}
