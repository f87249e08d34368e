//! The Proca field `P = -δd + m²` through its Klein–Gordon factorisation
//! `E_P = E_{K⁽¹⁾} ∘ R`, `R = 1 - m⁻² dδ`.
//!
//! Frame components are taken in the coordinate coframe `dx^a`; the Levi-Civita
//! forms on `Λ¹` are `(Γ_μ)_{ab} = -Γ^b_{μa}`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix4x3, Vector3, Vector4};
use num_complex::Complex64;
use thiserror::Error;

use crate::exprs::{Expr, ExprError, ExprMatrix};
use crate::geometry::{GeometryError, PhasePoint, SpacetimeModel};
use crate::nhop::{self, box_zeroth_order, ConnectionForms, NHOperatorSpec, NhopError};
use crate::polsets::{self, CorollaryReport, PolFibre, PolsetError, RelationPoint, Verdict};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ProcaError {
    #[error("Proca mass must be positive and finite, got {0}")]
    Mass(f64),
    #[error("the Proca example needs a 4-dimensional spacetime, got {0}")]
    Dimension(usize),
    #[error("zero spatial momentum")]
    ZeroMomentum,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Nhop(#[from] NhopError),
    #[error(transparent)]
    Polset(#[from] PolsetError),
}

/// Ricci tensor `R_{σν}` with `R_{σν} = ∂_ρ Γ^ρ_{νσ} - ∂_ν Γ^ρ_{ρσ} + Γ^ρ_{ρλ} Γ^λ_{νσ} - Γ^ρ_{νλ} Γ^λ_{ρσ}`.
pub fn ricci_lower_expr(m: &SpacetimeModel) -> ExprMatrix {
    let n = m.dim();
    let c = |l, a, b| m.christoffel_expr(l, a, b).clone();
    ExprMatrix::from_fn(n, n, |s, v| {
        let mut acc = Expr::zero();
        for r in 0..n {
            acc = Expr::add(acc, c(r, v, s).diff(r));
            acc = Expr::sub(acc, c(r, r, s).diff(v));
            for l in 0..n {
                acc = Expr::add(acc, Expr::mul(c(r, r, l), c(l, v, s)));
                acc = Expr::sub(acc, Expr::mul(c(r, v, l), c(l, r, s)));
            }
        }
        acc
    })
}

/// `R_μ^ν = R_{μσ} g^{σν}`.
pub fn ricci_mixed_expr(m: &SpacetimeModel) -> ExprMatrix {
    ricci_lower_expr(m).mul(m.g_inv_expr())
}

pub fn ricci_at(m: &SpacetimeModel, x: &[f64]) -> Result<DMatrix<f64>, ProcaError> {
    let metric = m.metric_at(x)?;
    Ok(ricci_lower_expr(m).eval(x)? * metric.inv)
}

/// Levi-Civita connection forms on `Λ¹` in the coordinate coframe.
pub fn levi_civita_forms(m: &SpacetimeModel) -> ConnectionForms {
    let n = m.dim();
    let forms = (0..n)
        .map(|mu| ExprMatrix::from_fn(n, n, |a, b| Expr::neg(m.christoffel_expr(b, mu, a).clone())))
        .collect();
    ConnectionForms::new(n, forms)
}

#[derive(Clone, Debug)]
pub struct ProcaContext {
    spacetime: Arc<SpacetimeModel>,
    mass: f64,
}

impl ProcaContext {
    pub fn new(spacetime: Arc<SpacetimeModel>, mass: f64) -> Result<Self, ProcaError> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(ProcaError::Mass(mass));
        }
        if spacetime.dim() != 4 {
            return Err(ProcaError::Dimension(spacetime.dim()));
        }
        Ok(ProcaContext { spacetime, mass })
    }

    pub fn spacetime(&self) -> &Arc<SpacetimeModel> {
        &self.spacetime
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Zeroth-order part of `K⁽¹⁾` acting on function components:
    /// `g^{μν}(∂_μΓ_ν + Γ_μΓ_ν - Γ^λ_{μν}Γ_λ) + m² I + Ric`.
    fn potential_function_form(&self, gamma: &ConnectionForms) -> ExprMatrix {
        let m = &self.spacetime;
        let n = m.dim();
        let ginv = m.g_inv_expr();
        let forms = gamma.forms();
        let mut v = ExprMatrix::identity(n).scale(&Expr::num(self.mass * self.mass));
        v = v.add(&ricci_mixed_expr(m));
        for mu in 0..n {
            for nu in 0..n {
                let g = ginv.get(mu, nu);
                if g.is_zero() {
                    continue;
                }
                let mut inner = forms[nu].diff(mu).add(&forms[mu].mul(&forms[nu]));
                for l in 0..n {
                    let c = m.christoffel_expr(l, mu, nu);
                    if !c.is_zero() {
                        inner = inner.sub(&forms[l].scale(c));
                    }
                }
                v = v.add(&inner.scale(g));
            }
        }
        v
    }

    /// `∂_ν ln (-g)^{1/2}`.
    fn log_density_gradient(&self) -> Vec<Expr> {
        let d = self.spacetime.abs_det_expr();
        (0..self.spacetime.dim())
            .map(|nu| Expr::mul(Expr::num(0.5), Expr::div(d.diff(nu), d.clone())))
            .collect()
    }

    /// `K⁽¹⁾` on function components, in the `I □ + C ∂ + V` layout.
    pub fn kg1_function_form(&self) -> Result<NHOperatorSpec, ProcaError> {
        let m = self.spacetime.clone();
        let n = m.dim();
        let gamma = levi_civita_forms(&m);
        let vhat = self.potential_function_form(&gamma);
        let lr = self.log_density_gradient();
        let base = nhop::reconstruct(m.clone(), &gamma, vhat)?;
        let ginv = m.g_inv_expr();
        let id = ExprMatrix::identity(n);
        let c = (0..n)
            .map(|nu| {
                let shift = Expr::sum((0..n).map(|mu| Expr::mul(ginv.get(mu, nu).clone(), lr[mu].clone())));
                base.first_order()[nu].add(&id.scale(&shift))
            })
            .collect();
        let v = base.potential().sub(&id.scale(&box_zeroth_order(&m)));
        Ok(NHOperatorSpec::new(m, n, c, v)?)
    }

    /// `(-g)^{1/4} K⁽¹⁾ (-g)^{-1/4}`: `C^ν = 2 g^{νμ} Γ_μ`, `V = V̂ - g^{μν} Γ_μ ∂_ν ln (-g)^{1/2}`.
    pub fn kg1_spec(&self) -> Result<NHOperatorSpec, ProcaError> {
        let m = self.spacetime.clone();
        let n = m.dim();
        let gamma = levi_civita_forms(&m);
        let mut v = self.potential_function_form(&gamma);
        let lr = self.log_density_gradient();
        let ginv = m.g_inv_expr();
        for mu in 0..n {
            for nu in 0..n {
                let g = ginv.get(mu, nu);
                if g.is_zero() || lr[nu].is_zero() {
                    continue;
                }
                v = v.sub(&gamma.forms()[mu].scale(&Expr::mul(g.clone(), lr[nu].clone())));
            }
        }
        Ok(nhop::reconstruct(m, &gamma, v)?)
    }

    /// Principal symbol of `R`: `v ↦ -m⁻² g⁻¹(k, v) k`.
    pub fn r_symbol(&self, p: &PhasePoint) -> Result<DMatrix<f64>, ProcaError> {
        let ksharp = self.spacetime.sharp(p.x.as_slice(), &p.k)?;
        Ok(&p.k * ksharp.transpose() * (-1.0 / (self.mass * self.mass)))
    }

    /// `ℂ k ⊗ (k′)^♯`, zero off `𝓡`.
    pub fn predicted_fibre(&self, rp: &RelationPoint) -> Result<PolFibre, ProcaError> {
        match rp.r {
            Verdict::Unknown => Err(PolsetError::UnknownVerdict.into()),
            Verdict::Out => Ok(PolFibre::zero()),
            Verdict::In => Ok(PolFibre::span_real(&self.predicted_basis(rp)?)),
        }
    }

    /// Unnormalised `w_α^β = k_α (k′)^β`.
    pub fn predicted_basis(&self, rp: &RelationPoint) -> Result<DMatrix<f64>, ProcaError> {
        let pp = rp.pp();
        let kp_sharp = self.spacetime.sharp(pp.x.as_slice(), &pp.k)?;
        Ok(&rp.p.k * kp_sharp.transpose())
    }

    /// `(‖k^α w_α^β‖, ‖w_α^β k′_β‖)` for a matrix `w` at the relation point.
    pub fn constraint_residuals(&self, rp: &RelationPoint, w: &DMatrix<f64>) -> Result<(f64, f64), ProcaError> {
        let ksharp = self.spacetime.sharp(rp.p.x.as_slice(), &rp.p.k)?;
        let left = w.transpose() * ksharp;
        let right = w * rp.pp().k;
        Ok((left.norm(), right.norm()))
    }

    /// Projective distances of `r(x,k) Π` and `Π r(x′,k′)` from the predicted fibre,
    /// with `Π` transported by the Weitzenböck connection of `K⁽¹⁾`.
    pub fn chain_consistency(&self, kg1: &NHOperatorSpec, rp: &RelationPoint) -> Result<(f64, f64), ProcaError> {
        let predicted = self.predicted_fibre(rp)?;
        let pi = polsets::propagator(kg1, rp)?;
        let r_here = complex(&self.r_symbol(&rp.p)?);
        let r_there = complex(&self.r_symbol(&rp.pp())?);
        let left = r_here * &pi;
        let right = &pi * r_there;
        Ok((predicted.distance(&left), predicted.distance(&right)))
    }

    /// Corollary test with `q = id`, `r` the principal symbol of `R`, plus a negative
    /// control where `r` is shifted by its own value at `(x′,k′)`, so that it vanishes there.
    pub fn wf_claim(&self, kg1: &NHOperatorSpec, rp: &RelationPoint) -> Result<ProcaClaim, ProcaError> {
        let id = |_: &PhasePoint| DMatrix::<Complex64>::identity(4, 4);
        let r = |p: &PhasePoint| complex(&self.r_symbol(p).expect("point lies in the chart"));
        let claim = polsets::corollary_test(id, r, kg1, rp)?;
        let anchor = self.r_symbol(&rp.pp())?;
        let control_r = |p: &PhasePoint| complex(&(self.r_symbol(p).expect("point lies in the chart") - &anchor));
        let control = polsets::corollary_test(id, control_r, kg1, rp)?;
        Ok(ProcaClaim { claim, control })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ProcaClaim {
    pub claim: CorollaryReport,
    pub control: CorollaryReport,
}

fn complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Minkowski polarisation covector `z = (v⃗·k⃗, ±|k⃗| v⃗)` for the null covector
/// `k = (±|k⃗|, k⃗)`; satisfies `η^{μν} k_μ z_ν = 0`.
pub fn z_from_v(k_spatial: &Vector3<f64>, sign: f64, v: &Vector3<f64>) -> Result<Vector4<f64>, ProcaError> {
    let kn = k_spatial.norm();
    if kn == 0.0 {
        return Err(ProcaError::ZeroMomentum);
    }
    let s = sign.signum() * kn;
    Ok(Vector4::new(v.dot(k_spatial), s * v[0], s * v[1], s * v[2]))
}

pub fn null_covector(k_spatial: &Vector3<f64>, sign: f64) -> Vector4<f64> {
    let kn = k_spatial.norm();
    Vector4::new(sign.signum() * kn, k_spatial[0], k_spatial[1], k_spatial[2])
}

/// Least-squares inverse of [`z_from_v`].
pub fn v_from_z(k_spatial: &Vector3<f64>, sign: f64, z: &Vector4<f64>) -> Result<Vector3<f64>, ProcaError> {
    let kn = k_spatial.norm();
    if kn == 0.0 {
        return Err(ProcaError::ZeroMomentum);
    }
    let s = sign.signum() * kn;
    let a = Matrix4x3::new(
        k_spatial[0], k_spatial[1], k_spatial[2], //
        s, 0.0, 0.0, //
        0.0, s, 0.0, //
        0.0, 0.0, s,
    );
    let svd = a.svd(true, true);
    svd.solve(z, 1e-14).map_err(|_| ProcaError::ZeroMomentum)
}

pub fn minkowski_pairing(k: &Vector4<f64>, z: &Vector4<f64>) -> f64 {
    k[0] * z[0] - k[1] * z[1] - k[2] * z[2] - k[3] * z[3]
}

pub fn as_dvector(v: &Vector4<f64>) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}
