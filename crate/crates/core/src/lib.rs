//! Bicharacteristic flow, symbol calculus and predicted polarisation fibres for
//! Green operators of normally hyperbolic systems.
//!
//! Conventions used throughout:
//!
//! * Lorentzian metrics have signature `(+, -, …, -)`.
//! * An operator `Σ A_α ∂^α` has full symbol `Σ A_α (iξ)^α`.
//! * The scalar principal symbol is `q(x, k) = -g^{μν} k_μ k_ν`.

pub mod bichar;
pub mod exprs;
pub mod geometry;
pub mod nhop;
pub mod ode;
pub mod polsets;
pub mod proca;
pub mod symbols;
pub mod verify;
