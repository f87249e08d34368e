//! Membership in the relation sets `𝓡`, `𝓡^±` and the predicted polarisation
//! fibres of Green operators.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::bichar::{self, BicharError, Relation, RelationParams, WitnessGeodesic};
use crate::geometry::{CausalOrder, PhasePoint, SpacetimeModel};
use crate::nhop::{self, NHOperatorSpec};

pub const DEFAULT_FIBRE_TOL: f64 = 1e-6;
pub const DEFAULT_COROLLARY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum PolsetError {
    #[error("relation verdict is unknown; the fibre cannot be decided")]
    UnknownVerdict,
    #[error("causal order is unavailable for this spacetime")]
    UnknownCausalOrder,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Bichar(#[from] BicharError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    In,
    Out,
    Unknown,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::In => "in",
            Verdict::Out => "out",
            Verdict::Unknown => "unknown",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

/// `(x, k; x′, -k′)` with its membership verdicts.
#[derive(Clone, Debug)]
pub struct RelationPoint {
    pub p: PhasePoint,
    /// Second point with the covector stored as `-k′`.
    pub pp_signed: PhasePoint,
    pub witness: Option<WitnessGeodesic>,
    /// `None` when the spacetime has no causal-order rule.
    pub causal: Option<CausalOrder>,
    pub r: Verdict,
    pub r_plus: Verdict,
    pub r_minus: Verdict,
    pub multiple_witnesses: bool,
    pub reason: String,
}

impl RelationPoint {
    /// `(x′, k′)` with the sign undone.
    pub fn pp(&self) -> PhasePoint {
        self.pp_signed.flipped()
    }

    pub fn on_twisted_diagonal(&self) -> bool {
        self.p.x == self.pp_signed.x
            && self.p.k.iter().zip(self.pp_signed.k.iter()).all(|(a, b)| *a == -*b)
            && self.p.k.iter().any(|&v| v != 0.0)
    }

    pub fn causal_tag(&self) -> &'static str {
        self.causal.map_or("unknown", CausalOrder::name)
    }

    pub fn verdict(&self, sign: Sign) -> Verdict {
        match sign {
            Sign::Plus => self.r_plus,
            Sign::Minus => self.r_minus,
        }
    }
}

/// Classifies `(x, k; x′, -k′)`, passed with the second covector already negated.
pub fn in_r(m: &SpacetimeModel, p: &PhasePoint, pp_signed: &PhasePoint, params: &RelationParams) -> RelationPoint {
    let causal = m.causal_order(p.x.as_slice(), pp_signed.x.as_slice()).ok();
    let mut rp = RelationPoint {
        p: p.clone(),
        pp_signed: pp_signed.clone(),
        witness: None,
        causal,
        r: Verdict::Unknown,
        r_plus: Verdict::Unknown,
        r_minus: Verdict::Unknown,
        multiple_witnesses: false,
        reason: String::new(),
    };
    match bichar::relation_check(m, p, &pp_signed.flipped(), params) {
        Ok(out) => {
            rp.r = match out.relation {
                Relation::Related => Verdict::In,
                Relation::NotRelated => Verdict::Out,
                Relation::Unknown => Verdict::Unknown,
            };
            rp.witness = out.witness;
            rp.multiple_witnesses = out.multiple_witnesses;
            rp.reason = out.reason.to_string();
        }
        Err(BicharError::ZeroCovector) => {
            rp.r = Verdict::Out;
            rp.reason = "zero covector".into();
        }
        Err(e) => rp.reason = e.to_string(),
    }
    let refine = |pick: fn(CausalOrder) -> bool| match (rp.r, causal) {
        (Verdict::Out, _) => Verdict::Out,
        (Verdict::In, Some(c)) => {
            if pick(c) {
                Verdict::In
            } else {
                Verdict::Out
            }
        }
        _ => Verdict::Unknown,
    };
    rp.r_plus = refine(CausalOrder::in_future);
    rp.r_minus = refine(CausalOrder::in_past);
    rp
}

/// A line (or the zero subspace) in `B_x ⊗ B*_{x′}`, stored by a unit basis.
#[derive(Clone, Debug, PartialEq)]
pub struct PolFibre {
    basis: Option<DMatrix<Complex64>>,
    pub tol: f64,
}

impl PolFibre {
    pub fn zero() -> Self {
        PolFibre { basis: None, tol: DEFAULT_FIBRE_TOL }
    }

    pub fn span(w: &DMatrix<Complex64>) -> Self {
        let n = w.norm();
        if n == 0.0 {
            return Self::zero();
        }
        PolFibre { basis: Some(w / Complex64::new(n, 0.0)), tol: DEFAULT_FIBRE_TOL }
    }

    pub fn span_real(w: &DMatrix<f64>) -> Self {
        Self::span(&w.map(|v| Complex64::new(v, 0.0)))
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn basis(&self) -> Option<&DMatrix<Complex64>> {
        self.basis.as_ref()
    }

    pub fn is_zero(&self) -> bool {
        self.basis.is_none()
    }

    /// `‖w - ⟨u,w⟩u‖ / ‖w‖` for the unit basis `u`.
    pub fn distance(&self, w: &DMatrix<Complex64>) -> f64 {
        let wn = w.norm();
        match &self.basis {
            None => {
                if wn == 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
            Some(u) => {
                if wn == 0.0 {
                    return 0.0;
                }
                if u.shape() != w.shape() {
                    return 1.0;
                }
                let inner: Complex64 = u.iter().zip(w.iter()).map(|(a, b)| a.conj() * b).sum();
                (w - u * inner).norm() / wn
            }
        }
    }

    pub fn membership(&self, w: &DMatrix<Complex64>) -> (bool, f64) {
        let d = self.distance(w);
        let member = match &self.basis {
            None => w.norm() == 0.0,
            Some(_) => d <= self.tol,
        };
        (member, d)
    }

    /// Projective distance between two fibres; 0 for two zero fibres, 1 for a zero
    /// against a nonzero fibre.
    pub fn fibre_distance(&self, other: &PolFibre) -> f64 {
        match (&self.basis, &other.basis) {
            (None, None) => 0.0,
            (Some(_), None) | (None, Some(_)) => 1.0,
            (Some(_), Some(v)) => self.distance(v),
        }
    }
}

/// Propagator `Π_{x,k}^{x′,k′}` of the Weitzenböck connection of `P` along the witness.
pub fn propagator(p: &NHOperatorSpec, rp: &RelationPoint) -> Result<DMatrix<Complex64>, PolsetError> {
    let w = match (rp.r, &rp.witness) {
        (Verdict::In, Some(w)) => w,
        (Verdict::In, None) | (Verdict::Unknown, _) => return Err(PolsetError::UnknownVerdict),
        (Verdict::Out, _) => return Ok(DMatrix::zeros(p.rank(), p.rank())),
    };
    let gamma = nhop::weitzenboeck_extract(p);
    Ok(bichar::parallel_transport(&gamma, w)?.matrix)
}

pub fn fibre_ep(p: &NHOperatorSpec, rp: &RelationPoint) -> Result<PolFibre, PolsetError> {
    match rp.r {
        Verdict::Unknown => Err(PolsetError::UnknownVerdict),
        Verdict::Out => Ok(PolFibre::zero()),
        Verdict::In => Ok(PolFibre::span(&propagator(p, rp)?)),
    }
}

pub fn fibre_ep_pm(p: &NHOperatorSpec, rp: &RelationPoint, sign: Sign) -> Result<PolFibre, PolsetError> {
    if rp.on_twisted_diagonal() {
        let r = p.rank();
        return Ok(PolFibre::span(&DMatrix::identity(r, r)));
    }
    if rp.causal.is_none() && rp.r != Verdict::Out {
        return Err(PolsetError::UnknownCausalOrder);
    }
    match rp.verdict(sign) {
        Verdict::Unknown => Err(PolsetError::UnknownVerdict),
        Verdict::Out => Ok(PolFibre::zero()),
        Verdict::In => Ok(PolFibre::span(&propagator(p, rp)?)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorollaryReport {
    pub nonzero: bool,
    pub norm: f64,
    pub threshold: f64,
}

/// `N = q Π r`; nonzero iff `‖N‖ > tol_rel ‖q‖ ‖Π‖ ‖r‖`.
pub fn corollary_from_matrices(
    q: &DMatrix<Complex64>,
    pi: &DMatrix<Complex64>,
    r: &DMatrix<Complex64>,
    tol_rel: f64,
) -> Result<CorollaryReport, PolsetError> {
    if q.ncols() != pi.nrows() || pi.ncols() != r.nrows() {
        return Err(PolsetError::Shape(format!(
            "q is {}x{}, Π is {}x{}, r is {}x{}",
            q.nrows(),
            q.ncols(),
            pi.nrows(),
            pi.ncols(),
            r.nrows(),
            r.ncols()
        )));
    }
    let n = q * pi * r;
    let norm = n.norm();
    let threshold = tol_rel * q.norm() * pi.norm() * r.norm();
    Ok(CorollaryReport { nonzero: norm > threshold, norm, threshold })
}

/// Evaluates `q` at `(x, k)` and `r` at `(x′, k′)` and tests `q Π r ≠ 0`. A nonzero
/// verdict places this point of `𝓡` in the wavefront set of `Q E_P R`.
pub fn corollary_test<Q, R>(q_sym: Q, r_sym: R, p: &NHOperatorSpec, rp: &RelationPoint) -> Result<CorollaryReport, PolsetError>
where
    Q: Fn(&PhasePoint) -> DMatrix<Complex64>,
    R: Fn(&PhasePoint) -> DMatrix<Complex64>,
{
    let pi = propagator(p, rp)?;
    corollary_from_matrices(&q_sym(&rp.p), &pi, &r_sym(&rp.pp()), DEFAULT_COROLLARY_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn membership_cases() {
        let u = DMatrix::from_fn(2, 2, |i, j| Complex64::new((i + 2 * j) as f64, 0.5));
        let f = PolFibre::span(&u);
        let (ok, d) = f.membership(&(&u * Complex64::new(3.7, 0.0)));
        assert!(ok && d < 1e-15);
        let z = PolFibre::zero();
        assert!(z.membership(&DMatrix::zeros(2, 2)).0);
        assert!(!z.membership(&u).0);
    }
}
