//! Normally hyperbolic operators `P = I □ + C^ν ∂_ν + V` on half-densitised frame
//! components, where `□` is the d'Alembertian on half-densities:
//!
//! ```text
//! □ = (-g)^{-1/4} ∂_μ g^{μν} (-g)^{1/2} ∂_ν (-g)^{-1/4}
//!   = g^{μν} ∂_μ ∂_ν + (∂_μ g^{μν}) ∂_ν - σ^{-1} ∂_μ (g^{μν} ∂_ν σ),   σ = (-g)^{1/4}.
//! ```
//!
//! Here `-g` means `|det g|`, which differs from `-det g` in odd dimension.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::exprs::{Expr, ExprError, ExprMatrix};
use crate::geometry::{GeometryError, MetricPair, PhasePoint, SpacetimeModel};
use crate::symbols::{CExprMatrix, MultiIndex, PolySymbol, SymbolError};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum NhopError {
    #[error("invalid operator: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Symbol(#[from] SymbolError),
}

#[derive(Clone, Debug)]
pub struct NHOperatorSpec {
    spacetime: Arc<SpacetimeModel>,
    rank: usize,
    c: Vec<ExprMatrix>,
    v: ExprMatrix,
}

fn check_matrix(m: &ExprMatrix, rank: usize, dim: usize, what: &str) -> Result<(), NhopError> {
    if m.nrows() != rank || m.ncols() != rank {
        return Err(NhopError::Invalid(format!(
            "{what} is {}x{}, expected {rank}x{rank}",
            m.nrows(),
            m.ncols()
        )));
    }
    if let Some(v) = m.max_var() {
        if v >= dim {
            return Err(NhopError::Invalid(format!("{what} references x{v} in a {dim}-dimensional chart")));
        }
    }
    Ok(())
}

impl NHOperatorSpec {
    pub fn new(
        spacetime: Arc<SpacetimeModel>,
        rank: usize,
        c: Vec<ExprMatrix>,
        v: ExprMatrix,
    ) -> Result<Self, NhopError> {
        let dim = spacetime.dim();
        if rank == 0 {
            return Err(NhopError::Invalid("bundle rank must be positive".into()));
        }
        if c.len() != dim {
            return Err(NhopError::Invalid(format!("{} first-order coefficients for dimension {dim}", c.len())));
        }
        for (nu, m) in c.iter().enumerate() {
            check_matrix(m, rank, dim, &format!("C^{nu}"))?;
        }
        check_matrix(&v, rank, dim, "V")?;
        Ok(NHOperatorSpec { spacetime, rank, c, v })
    }

    /// `I □`, no first-order or potential terms.
    pub fn pure_box(spacetime: Arc<SpacetimeModel>, rank: usize) -> Self {
        let dim = spacetime.dim();
        NHOperatorSpec { spacetime, rank, c: vec![ExprMatrix::zeros(rank, rank); dim], v: ExprMatrix::zeros(rank, rank) }
    }

    pub fn spacetime(&self) -> &Arc<SpacetimeModel> {
        &self.spacetime
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.spacetime.dim()
    }

    pub fn first_order(&self) -> &[ExprMatrix] {
        &self.c
    }

    pub fn potential(&self) -> &ExprMatrix {
        &self.v
    }

    /// Full chart symbol of `P`, `□`'s own lower-order terms included.
    pub fn full_symbol(&self) -> Result<PolySymbol, NhopError> {
        let m = &self.spacetime;
        let dim = m.dim();
        let r = self.rank;
        let ginv = m.g_inv_expr();
        let mut terms = Vec::new();
        for mu in 0..dim {
            for nu in mu..dim {
                let coeff = if mu == nu {
                    ginv.get(mu, mu).clone()
                } else {
                    Expr::add(ginv.get(mu, nu).clone(), ginv.get(nu, mu).clone())
                };
                terms.push((MultiIndex::pair(dim, mu, nu), scalar_block(r, coeff)));
            }
        }
        for nu in 0..dim {
            let dg = Expr::sum((0..dim).map(|mu| ginv.get(mu, nu).diff(mu)));
            let block = scalar_block(r, dg).add(&CExprMatrix::real(self.c[nu].clone()));
            terms.push((MultiIndex::unit(dim, nu), block));
        }
        let zeroth = scalar_block(r, box_zeroth_order(m)).add(&CExprMatrix::real(self.v.clone()));
        terms.push((MultiIndex::zero(dim), zeroth));
        Ok(PolySymbol::from_operator(dim, r, 2, terms)?)
    }
}

fn scalar_block(rank: usize, e: Expr) -> CExprMatrix {
    CExprMatrix::real(ExprMatrix::identity(rank).scale(&e))
}

/// Zeroth-order part of `□` on half-densities: `-σ^{-1} ∂_μ (g^{μν} ∂_ν σ)`.
pub fn box_zeroth_order(m: &SpacetimeModel) -> Expr {
    let dim = m.dim();
    let sigma = Expr::pow(m.abs_det_expr().clone(), Expr::num(0.25));
    if sigma.is_constant() {
        return Expr::zero();
    }
    let ginv = m.g_inv_expr();
    let div = Expr::sum((0..dim).map(|mu| {
        let flux = Expr::sum((0..dim).map(|nu| Expr::mul(ginv.get(mu, nu).clone(), sigma.diff(nu))));
        flux.diff(mu)
    }));
    Expr::neg(Expr::div(div, sigma))
}

/// Connection one-forms `Γ_μ(x)`, each a rank × rank matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ConnectionForms {
    rank: usize,
    forms: Vec<ExprMatrix>,
}

impl ConnectionForms {
    pub fn new(rank: usize, forms: Vec<ExprMatrix>) -> Self {
        assert!(forms.iter().all(|f| f.nrows() == rank && f.ncols() == rank));
        ConnectionForms { rank, forms }
    }

    pub fn zero(dim: usize, rank: usize) -> Self {
        ConnectionForms { rank, forms: vec![ExprMatrix::zeros(rank, rank); dim] }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.forms.len()
    }

    pub fn forms(&self) -> &[ExprMatrix] {
        &self.forms
    }

    pub fn is_zero(&self) -> bool {
        self.forms.iter().all(ExprMatrix::is_zero)
    }

    pub fn eval_at(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>, ExprError> {
        self.forms.iter().map(|f| f.eval(x)).collect()
    }

    /// `Γ_v = v^μ Γ_μ(x)`.
    pub fn contract(&self, x: &[f64], v: &[f64]) -> Result<DMatrix<f64>, ExprError> {
        let mut out = DMatrix::zeros(self.rank, self.rank);
        for (f, &vm) in self.forms.iter().zip(v) {
            if vm != 0.0 && !f.is_zero() {
                out += f.eval(x)? * vm;
            }
        }
        Ok(out)
    }
}

/// `Γ_μ = ½ g_{μν} C^ν`.
pub fn weitzenboeck_extract(p: &NHOperatorSpec) -> ConnectionForms {
    let dim = p.dim();
    let g = p.spacetime.g_low_expr();
    let half = Expr::num(0.5);
    let forms = (0..dim)
        .map(|mu| {
            let mut acc = ExprMatrix::zeros(p.rank, p.rank);
            for nu in 0..dim {
                let gmn = g.get(mu, nu);
                if gmn.is_zero() {
                    continue;
                }
                acc = acc.add(&p.c[nu].scale(&Expr::mul(half.clone(), gmn.clone())));
            }
            acc
        })
        .collect();
    ConnectionForms { rank: p.rank, forms }
}

/// `P = I □ + 2 g^{μν} Γ_μ ∂_ν + V`.
pub fn reconstruct(
    spacetime: Arc<SpacetimeModel>,
    gamma: &ConnectionForms,
    v: ExprMatrix,
) -> Result<NHOperatorSpec, NhopError> {
    let dim = spacetime.dim();
    let ginv = spacetime.g_inv_expr().clone();
    let two = Expr::num(2.0);
    let c = (0..dim)
        .map(|nu| {
            let mut acc = ExprMatrix::zeros(gamma.rank, gamma.rank);
            for mu in 0..dim {
                let gmn = ginv.get(mu, nu);
                if gmn.is_zero() {
                    continue;
                }
                acc = acc.add(&gamma.forms[mu].scale(&Expr::mul(two.clone(), gmn.clone())));
            }
            acc
        })
        .collect();
    NHOperatorSpec::new(spacetime, gamma.rank, c, v)
}

/// `p^sub(x, k) = 2i g^{μν} k_ν Γ_μ(x)` with a precomputed metric.
pub fn subprincipal_with(
    gamma: &ConnectionForms,
    metric: &MetricPair,
    x: &[f64],
    k: &[f64],
) -> Result<DMatrix<Complex64>, ExprError> {
    let kv = nalgebra::DVector::from_column_slice(k);
    let ksharp = &metric.inv * kv;
    let g = gamma.contract(x, ksharp.as_slice())?;
    Ok(g.map(|v| Complex64::new(0.0, 2.0 * v)))
}

pub fn nhop_subprincipal(p: &NHOperatorSpec, pt: &PhasePoint) -> Result<DMatrix<Complex64>, NhopError> {
    let gamma = weitzenboeck_extract(p);
    let metric = p.spacetime.metric_at(pt.x.as_slice())?;
    Ok(subprincipal_with(&gamma, &metric, pt.x.as_slice(), pt.k.as_slice())?)
}

/// Two-path check of `p^sub = 2i g^{μν} k_ν Γ_μ` against the refined-symbol
/// calculus; returns `‖difference‖ / (1 + ‖k‖)`.
pub fn verify_psub_identity(p: &NHOperatorSpec, pt: &PhasePoint) -> Result<f64, NhopError> {
    let symbol = p.full_symbol()?;
    verify_psub_with_symbol(p, &symbol, pt)
}

pub fn verify_psub_with_symbol(p: &NHOperatorSpec, symbol: &PolySymbol, pt: &PhasePoint) -> Result<f64, NhopError> {
    p.spacetime.metric_at(pt.x.as_slice())?;
    let via_symbol = symbol.subprincipal().evaluate(pt.x.as_slice(), pt.k.as_slice())?;
    let via_forms = nhop_subprincipal(p, pt)?;
    Ok((via_symbol - via_forms).norm() / (1.0 + pt.k.norm()))
}

/// `Γ*_μ = -Γ_μᵀ`.
pub fn dual_connection(gamma: &ConnectionForms) -> ConnectionForms {
    ConnectionForms { rank: gamma.rank, forms: gamma.forms.iter().map(|f| f.transpose().neg()).collect() }
}

/// Coefficients of `(-g)^α P (-g)^{-α}` for `α = ±1/4`.
pub fn half_density_conjugate(p: &NHOperatorSpec, alpha: f64) -> Result<NHOperatorSpec, NhopError> {
    if alpha.abs() != 0.25 {
        return Err(NhopError::Invalid(format!("conjugation power {alpha} is not ±1/4")));
    }
    let m = &p.spacetime;
    let dim = m.dim();
    let r = p.rank;
    let d = m.abs_det_expr().clone();
    if d.is_constant() {
        return Ok(p.clone());
    }
    let ginv = m.g_inv_expr();
    // L_ν = ∂_ν f / f for f = (-g)^{-α}
    let l: Vec<Expr> = (0..dim)
        .map(|nu| Expr::mul(Expr::num(-alpha), Expr::div(d.diff(nu), d.clone())))
        .collect();
    let id = ExprMatrix::identity(r);
    let two = Expr::num(2.0);
    let c: Vec<ExprMatrix> = (0..dim)
        .map(|nu| {
            let shift = Expr::sum((0..dim).map(|mu| Expr::mul(ginv.get(mu, nu).clone(), l[mu].clone())));
            p.c[nu].add(&id.scale(&Expr::mul(two.clone(), shift)))
        })
        .collect();
    // (□_2 f)/f with □_2 = g^{μν}∂_μ∂_ν + (∂_μ g^{μν})∂_ν, using ∂∂f/f = ∂L + L L.
    let mut scalar = Expr::zero();
    for mu in 0..dim {
        for nu in 0..dim {
            let gmn = ginv.get(mu, nu);
            if gmn.is_zero() {
                continue;
            }
            let second = Expr::add(l[nu].diff(mu), Expr::mul(l[mu].clone(), l[nu].clone()));
            scalar = Expr::add(scalar, Expr::mul(gmn.clone(), second));
        }
    }
    for nu in 0..dim {
        let dg = Expr::sum((0..dim).map(|mu| ginv.get(mu, nu).diff(mu)));
        scalar = Expr::add(scalar, Expr::mul(dg, l[nu].clone()));
    }
    let mut v = p.v.add(&id.scale(&scalar));
    for nu in 0..dim {
        v = v.add(&p.c[nu].scale(&l[nu]));
    }
    NHOperatorSpec::new(p.spacetime.clone(), r, c, v)
}
