//! Scalar expressions over chart coordinates `x0 … x{n-1}`.
//!
//! Trees are immutable and reference counted, so cloning is cheap and values
//! can be shared across threads. Derivatives are symbolic.

mod matrix;
mod parse;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use matrix::ExprMatrix;
pub use parse::parse;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Tanh,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }
}

#[derive(Debug, PartialEq)]
pub enum Node {
    Num(f64),
    Var(usize),
    Neg(Expr),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Pow(Expr, Expr),
    Call(Func, Expr),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DomainReason {
    DivisionByZero,
    LogNonPositive,
    SqrtNegative,
    NegativeBasePower,
    NonFinite,
}

impl fmt::Display for DomainReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainReason::DivisionByZero => "division by zero",
            DomainReason::LogNonPositive => "log of a non-positive value",
            DomainReason::SqrtNegative => "sqrt of a negative value",
            DomainReason::NegativeBasePower => "non-integer power of a negative base",
            DomainReason::NonFinite => "non-finite result",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: expected {expected}")]
    Syntax { offset: usize, expected: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("domain error in `{subexpr}`: {reason}")]
    Domain { subexpr: String, reason: DomainReason },
    #[error("variable x{index} is outside a {dim}-dimensional point")]
    VariableOutOfRange { index: usize, dim: usize },
}

/// Shared, immutable expression tree.
#[derive(Clone, PartialEq)]
pub struct Expr(Arc<Node>);

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

impl Expr {
    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn num(v: f64) -> Expr {
        Expr(Arc::new(Node::Num(v)))
    }

    pub fn zero() -> Expr {
        Expr::num(0.0)
    }

    pub fn one() -> Expr {
        Expr::num(1.0)
    }

    pub fn var(i: usize) -> Expr {
        Expr(Arc::new(Node::Var(i)))
    }

    pub fn as_num(&self) -> Option<f64> {
        match *self.0 {
            Node::Num(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_num() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_num() == Some(1.0)
    }

    fn raw(node: Node) -> Expr {
        Expr(Arc::new(node))
    }

    // Literal subtrees are folded only when the result is valid; otherwise the
    // node is kept so evaluation reports the domain error in context.
    fn fold(node: Node) -> Expr {
        let e = Expr::raw(node);
        let literal = match e.node() {
            Node::Neg(a) | Node::Call(_, a) => a.as_num().is_some(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                a.as_num().is_some() && b.as_num().is_some()
            }
            _ => false,
        };
        if literal {
            if let Ok(v) = e.eval(&[]) {
                return Expr::num(v);
            }
        }
        e
    }

    pub fn neg(a: Expr) -> Expr {
        if let Node::Neg(inner) = a.node() {
            return inner.clone();
        }
        Expr::fold(Node::Neg(a))
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        if a.is_zero() {
            return b;
        }
        if b.is_zero() {
            return a;
        }
        Expr::fold(Node::Add(a, b))
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        if b.is_zero() {
            return a;
        }
        if a.is_zero() {
            return Expr::neg(b);
        }
        Expr::fold(Node::Sub(a, b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        if a.is_zero() || b.is_zero() {
            return Expr::zero();
        }
        if a.is_one() {
            return b;
        }
        if b.is_one() {
            return a;
        }
        if a.as_num() == Some(-1.0) {
            return Expr::neg(b);
        }
        if b.as_num() == Some(-1.0) {
            return Expr::neg(a);
        }
        Expr::fold(Node::Mul(a, b))
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        if b.is_one() {
            return a;
        }
        if a.is_zero() && !b.is_zero() {
            return Expr::zero();
        }
        Expr::fold(Node::Div(a, b))
    }

    pub fn pow(a: Expr, b: Expr) -> Expr {
        if b.is_one() {
            return a;
        }
        if b.is_zero() {
            return Expr::one();
        }
        Expr::fold(Node::Pow(a, b))
    }

    pub fn powi(a: Expr, n: i32) -> Expr {
        Expr::pow(a, Expr::num(n as f64))
    }

    pub fn call(f: Func, a: Expr) -> Expr {
        Expr::fold(Node::Call(f, a))
    }

    pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Expr {
        terms.into_iter().fold(Expr::zero(), Expr::add)
    }

    /// Largest coordinate index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self.node() {
            Node::Num(_) => None,
            Node::Var(i) => Some(*i),
            Node::Neg(a) | Node::Call(_, a) => a.max_var(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                match (a.max_var(), b.max_var()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        self.max_var().is_none()
    }

    fn domain(&self, reason: DomainReason) -> ExprError {
        ExprError::Domain { subexpr: self.to_string(), reason }
    }

    /// Evaluates at the coordinate tuple `x`.
    pub fn eval(&self, x: &[f64]) -> Result<f64, ExprError> {
        let v = match self.node() {
            Node::Num(v) => *v,
            Node::Var(i) => *x
                .get(*i)
                .ok_or(ExprError::VariableOutOfRange { index: *i, dim: x.len() })?,
            Node::Neg(a) => -a.eval(x)?,
            Node::Add(a, b) => a.eval(x)? + b.eval(x)?,
            Node::Sub(a, b) => a.eval(x)? - b.eval(x)?,
            Node::Mul(a, b) => a.eval(x)? * b.eval(x)?,
            Node::Div(a, b) => {
                let num = a.eval(x)?;
                let den = b.eval(x)?;
                if den == 0.0 {
                    return Err(self.domain(DomainReason::DivisionByZero));
                }
                num / den
            }
            Node::Pow(a, b) => {
                let base = a.eval(x)?;
                let e = b.eval(x)?;
                let integral = e.fract() == 0.0;
                if base < 0.0 && !integral {
                    return Err(self.domain(DomainReason::NegativeBasePower));
                }
                if base == 0.0 && e < 0.0 {
                    return Err(self.domain(DomainReason::DivisionByZero));
                }
                if integral && e.abs() <= 64.0 {
                    base.powi(e as i32)
                } else {
                    base.powf(e)
                }
            }
            Node::Call(f, a) => {
                let v = a.eval(x)?;
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Tanh => v.tanh(),
                    Func::Log => {
                        if v <= 0.0 {
                            return Err(self.domain(DomainReason::LogNonPositive));
                        }
                        v.ln()
                    }
                    Func::Sqrt => {
                        if v < 0.0 {
                            return Err(self.domain(DomainReason::SqrtNegative));
                        }
                        v.sqrt()
                    }
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.domain(DomainReason::NonFinite))
        }
    }

    /// Symbolic partial derivative with respect to `x{idx}`.
    pub fn diff(&self, idx: usize) -> Expr {
        match self.node() {
            Node::Num(_) => Expr::zero(),
            Node::Var(i) => Expr::num(if *i == idx { 1.0 } else { 0.0 }),
            Node::Neg(a) => Expr::neg(a.diff(idx)),
            Node::Add(a, b) => Expr::add(a.diff(idx), b.diff(idx)),
            Node::Sub(a, b) => Expr::sub(a.diff(idx), b.diff(idx)),
            Node::Mul(a, b) => Expr::add(
                Expr::mul(a.diff(idx), b.clone()),
                Expr::mul(a.clone(), b.diff(idx)),
            ),
            Node::Div(a, b) => {
                let da = a.diff(idx);
                let db = b.diff(idx);
                if db.is_zero() {
                    return Expr::div(da, b.clone());
                }
                Expr::div(
                    Expr::sub(Expr::mul(da, b.clone()), Expr::mul(a.clone(), db)),
                    Expr::powi(b.clone(), 2),
                )
            }
            Node::Pow(a, b) => {
                let da = a.diff(idx);
                let db = b.diff(idx);
                if db.is_zero() {
                    // n a^(n-1) a'
                    let n_minus_1 = Expr::sub(b.clone(), Expr::one());
                    return Expr::mul(
                        Expr::mul(b.clone(), Expr::pow(a.clone(), n_minus_1)),
                        da,
                    );
                }
                if da.is_zero() {
                    // a^b log(a) b'
                    return Expr::mul(
                        Expr::mul(self.clone(), Expr::call(Func::Log, a.clone())),
                        db,
                    );
                }
                Expr::mul(
                    self.clone(),
                    Expr::add(
                        Expr::mul(db, Expr::call(Func::Log, a.clone())),
                        Expr::div(Expr::mul(b.clone(), da), a.clone()),
                    ),
                )
            }
            Node::Call(f, a) => {
                let da = a.diff(idx);
                if da.is_zero() {
                    return Expr::zero();
                }
                let outer = match f {
                    Func::Sin => Expr::call(Func::Cos, a.clone()),
                    Func::Cos => Expr::neg(Expr::call(Func::Sin, a.clone())),
                    Func::Exp => self.clone(),
                    Func::Log => return Expr::div(da, a.clone()),
                    Func::Sqrt => {
                        return Expr::div(da, Expr::mul(Expr::num(2.0), self.clone()));
                    }
                    Func::Tanh => Expr::sub(Expr::one(), Expr::powi(self.clone(), 2)),
                };
                Expr::mul(outer, da)
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self.node() {
            Node::Add(..) | Node::Sub(..) => 1,
            Node::Mul(..) | Node::Div(..) => 2,
            Node::Neg(_) => 3,
            Node::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => 3,
            Node::Pow(..) => 4,
            _ => 5,
        }
    }

    fn write_child(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.precedence() < min {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

fn write_num(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        write!(f, "{}", v as i64)
    } else {
        // Debug gives the shortest round-trip form, with an exponent when needed.
        write!(f, "{v:?}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Num(v) => write_num(f, *v),
            Node::Var(i) => write!(f, "x{i}"),
            Node::Neg(a) => {
                f.write_str("-")?;
                a.write_child(f, 3)
            }
            Node::Add(a, b) | Node::Sub(a, b) => {
                a.write_child(f, 1)?;
                f.write_str(if matches!(self.node(), Node::Add(..)) { " + " } else { " - " })?;
                b.write_child(f, 2)
            }
            Node::Mul(a, b) | Node::Div(a, b) => {
                a.write_child(f, 2)?;
                f.write_str(if matches!(self.node(), Node::Mul(..)) { "*" } else { "/" })?;
                b.write_child(f, 4)
            }
            Node::Pow(a, b) => {
                a.write_child(f, 5)?;
                f.write_str("^")?;
                b.write_child(f, 3)
            }
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

impl std::str::FromStr for Expr {
    type Err = ExprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    #[test]
    fn folding_keeps_invalid_literals() {
        let e = Expr::div(Expr::one(), Expr::zero());
        assert!(e.as_num().is_none());
        assert!(matches!(
            e.eval(&[]),
            Err(ExprError::Domain { reason: DomainReason::DivisionByZero, .. })
        ));
        assert_eq!(Expr::add(Expr::num(2.0), Expr::num(3.0)).as_num(), Some(5.0));
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let err = p("1 + log(x0 - 1)").eval(&[1.0]).unwrap_err();
        match err {
            ExprError::Domain { subexpr, reason } => {
                assert_eq!(subexpr, "log(x0 - 1)");
                assert_eq!(reason, DomainReason::LogNonPositive);
            }
            other => panic!("{other:?}"),
        }
        assert!(p("x0^0.5").eval(&[-1.0]).is_err());
        assert_eq!(p("x0^2").eval(&[-3.0]).unwrap(), 9.0);
        assert!(p("sqrt(x0)").eval(&[-1e-3]).is_err());
    }

    #[test]
    fn variable_out_of_range() {
        assert_eq!(
            p("x3").eval(&[0.0, 1.0]),
            Err(ExprError::VariableOutOfRange { index: 3, dim: 2 })
        );
    }

    #[test]
    fn printing_respects_precedence() {
        for src in ["(x0 - x1) - (x2 - x3)", "x0/(x1*x2)", "(-x0)^2", "-x0^2", "x0^x1^2", "(x0^x1)^2"] {
            let e = p(src);
            let back = p(&e.to_string());
            for pt in [[0.7, 1.3, 2.1, 0.4], [1.9, 0.2, 0.5, 1.1]] {
                assert_eq!(e.eval(&pt).unwrap(), back.eval(&pt).unwrap(), "{src} -> {e}");
            }
        }
        assert_eq!(p("-x0^2").eval(&[3.0]).unwrap(), -9.0);
        assert_eq!(p("2^3^2").eval(&[]).unwrap(), 512.0);
    }

    #[test]
    fn derivative_rules() {
        assert_eq!(p("x0*x1").diff(0).to_string(), "x1");
        assert_eq!(p("sin(x2)").diff(2).to_string(), "cos(x2)");
        assert!(p("x0^2 + x1").diff(2).is_zero());
        let d = p("x0^x1");
        let (x0, x1) = (1.7_f64, 0.6_f64);
        let want0 = x1 * x0.powf(x1 - 1.0);
        let want1 = x0.powf(x1) * x0.ln();
        assert!((d.diff(0).eval(&[x0, x1]).unwrap() - want0).abs() < 1e-14);
        assert!((d.diff(1).eval(&[x0, x1]).unwrap() - want1).abs() < 1e-14);
    }
}
