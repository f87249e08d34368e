use polset_core::exprs::{parse, DomainReason, Expr, ExprError, ExprMatrix, Func, Node};
use polset_core::verify::EXPR_CORPUS;
use proptest::prelude::*;

fn num(e: &Expr) -> f64 {
    match e.node() {
        Node::Num(v) => *v,
        other => panic!("expected a literal, got {other:?}"),
    }
}

#[test]
fn parse_examples() {
    let e = parse("x0^2 - x1^2").unwrap();
    let Node::Sub(a, b) = e.node() else { panic!("{e}") };
    for (side, idx) in [(a, 0), (b, 1)] {
        let Node::Pow(base, exp) = side.node() else { panic!("{side}") };
        assert!(matches!(base.node(), Node::Var(i) if *i == idx));
        assert_eq!(num(exp), 2.0);
    }

    let e = parse("exp(2*x0)").unwrap();
    let Node::Call(Func::Exp, arg) = e.node() else { panic!("{e}") };
    let Node::Mul(l, r) = arg.node() else { panic!("{arg}") };
    assert_eq!(num(l), 2.0);
    assert!(matches!(r.node(), Node::Var(0)));

    match parse("x0 +") {
        Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 4),
        other => panic!("{other:?}"),
    }
}

#[test]
fn precedence_and_associativity() {
    let cases = [
        ("8 - 3 - 2", 3.0),
        ("8 / 4 / 2", 1.0),
        ("2^3^2", 512.0),
        ("-2^2", -4.0),
        ("2*3 + 4", 10.0),
        ("2*(3 + 4)", 14.0),
        ("  1+\t2 *3  ", 7.0),
        ("2^-1", 0.5),
        ("1.5e1 + 2E-1", 15.2),
    ];
    for (src, want) in cases {
        assert_eq!(parse(src).unwrap().eval(&[]).unwrap(), want, "{src}");
    }
}

#[test]
fn parse_errors() {
    assert!(matches!(parse("y + 1"), Err(ExprError::UnknownIdentifier { ref name, offset: 0 }) if name == "y"));
    assert!(matches!(parse("foo(x0)"), Err(ExprError::UnknownIdentifier { .. })));
    assert!(matches!(parse("(x0 + 1"), Err(ExprError::Syntax { .. })));
    assert!(matches!(parse(""), Err(ExprError::Syntax { offset: 0, .. })));
    assert!(matches!(parse("x0 x1"), Err(ExprError::Syntax { offset: 3, .. })));
    assert!(matches!(parse("2 $ 3"), Err(ExprError::Syntax { offset: 2, .. })));
}

#[test]
fn eval_examples() {
    assert_eq!(parse("x0^2 - x1^2").unwrap().eval(&[3.0, 2.0]).unwrap(), 5.0);
    assert_eq!(parse("exp(0)").unwrap().eval(&[0.0]).unwrap(), 1.0);
    match parse("1/x0").unwrap().eval(&[0.0]) {
        Err(ExprError::Domain { subexpr, reason }) => {
            assert_eq!(reason, DomainReason::DivisionByZero);
            assert_eq!(subexpr, "1/x0");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn domain_errors() {
    let reason = |src: &str, x: &[f64]| match parse(src).unwrap().eval(x) {
        Err(ExprError::Domain { reason, .. }) => reason,
        other => panic!("{src}: {other:?}"),
    };
    assert_eq!(reason("log(x0)", &[0.0]), DomainReason::LogNonPositive);
    assert_eq!(reason("log(x0)", &[-1.0]), DomainReason::LogNonPositive);
    assert_eq!(reason("sqrt(x0)", &[-1.0]), DomainReason::SqrtNegative);
    assert_eq!(reason("x0^0.5", &[-4.0]), DomainReason::NegativeBasePower);
    assert_eq!(parse("x0^3").unwrap().eval(&[-2.0]).unwrap(), -8.0);
    assert!(matches!(
        parse("x3").unwrap().eval(&[1.0]),
        Err(ExprError::VariableOutOfRange { index: 3, dim: 1 })
    ));
}

#[test]
fn diff_examples() {
    assert_eq!(parse("x0*x1").unwrap().diff(0).to_string(), "x1");
    assert_eq!(parse("sin(x2)").unwrap().diff(2).to_string(), "cos(x2)");
    let d = parse("exp(2*x0)").unwrap().diff(0);
    let x = 0.3;
    let h = 1e-6;
    let f = |t: f64| (2.0 * t).exp();
    let fd = (f(x + h) - f(x - h)) / (2.0 * h);
    let v = d.eval(&[x]).unwrap();
    assert!((v - fd).abs() <= 1e-6 * (1.0 + v.abs()));
    assert!((v - 3.644237).abs() < 1e-6);
    assert!(parse("x0*x1").unwrap().diff(3).is_zero());
}

#[test]
fn constructors_fold_literals() {
    let e = Expr::add(Expr::mul(Expr::num(2.0), Expr::num(3.0)), Expr::var(0));
    assert_eq!(e.to_string(), "6 + x0");
    assert_eq!(Expr::add(Expr::var(0), Expr::zero()).to_string(), "x0");
    assert!(Expr::mul(Expr::zero(), Expr::call(Func::Sin, Expr::var(1))).is_zero());
    // a literal subtree that fails to evaluate stays symbolic
    let bad = Expr::div(Expr::one(), Expr::zero());
    assert!(bad.eval(&[]).is_err());
    // the parser keeps the tree as written
    assert_eq!(parse("2*3 + x0").unwrap().to_string(), "2*3 + x0");
}

#[test]
fn matrix_inverse_and_det() {
    let m = ExprMatrix::parse_rows(&[vec!["1 + x0^2", "x1"], vec!["x1", "-1"]]).unwrap();
    let x = [0.4, 0.7];
    let v = m.eval(&x).unwrap();
    let inv = m.inverse().eval(&x).unwrap();
    assert!((&v * &inv - nalgebra::DMatrix::identity(2, 2)).amax() < 1e-14);
    assert!((m.det().eval(&x).unwrap() - v.determinant()).abs() < 1e-14);
}

#[test]
fn corpus_diff_matches_finite_differences() {
    for src in EXPR_CORPUS {
        let e = parse(src).unwrap();
        for x in [[0.4, 0.9, 1.1, 0.6], [1.2, 0.35, 0.8, 1.0]] {
            for i in 0..4 {
                let v = e.diff(i).eval(&x).unwrap();
                let h = 1e-6;
                let (mut a, mut b) = (x, x);
                a[i] += h;
                b[i] -= h;
                let fd = (e.eval(&a).unwrap() - e.eval(&b).unwrap()) / (2.0 * h);
                assert!((v - fd).abs() <= 1e-6 * (1.0 + v.abs()), "{src} d/dx{i}: {v} vs {fd}");
            }
        }
    }
}

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-3.0f64..3.0).prop_map(|v| Expr::num((v * 8.0).round() / 8.0)),
        (0usize..3).prop_map(Expr::var),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Expr::neg),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::add(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::sub(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::mul(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::div(a, b)),
            (inner.clone(), 0i32..4).prop_map(|(a, n)| Expr::powi(a, n)),
            inner.clone().prop_map(|a| Expr::call(Func::Sin, a)),
            inner.clone().prop_map(|a| Expr::call(Func::Cos, a)),
            inner.clone().prop_map(|a| Expr::call(Func::Tanh, a)),
            inner.prop_map(|a| Expr::call(Func::Exp, Expr::mul(Expr::num(0.25), a))),
        ]
    })
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn print_parse_round_trip(e in arb_expr(), pts in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 100)) {
        let back = parse(&e.to_string()).unwrap();
        for x in &pts {
            match (e.eval(x), back.eval(x)) {
                (Ok(a), Ok(b)) => prop_assert!(close(a, b, 1e-12), "{} -> {}: {} vs {}", e, back, a, b),
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "{}: {:?} vs {:?}", e, a, b),
            }
        }
    }

    #[test]
    fn mixed_partials_commute(e in arb_expr(), x in prop::collection::vec(-1.5f64..1.5, 3), i in 0usize..3, j in 0usize..3) {
        let a = e.diff(i).diff(j).eval(&x);
        let b = e.diff(j).diff(i).eval(&x);
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert!(close(a, b, 1e-9), "{}: {} vs {}", e, a, b);
        }
    }

    #[test]
    fn diff_matches_central_difference(e in arb_expr(), x in prop::collection::vec(-1.5f64..1.5, 3), i in 0usize..3) {
        let h = 1e-6;
        let (mut a, mut b) = (x.clone(), x.clone());
        a[i] += h;
        b[i] -= h;
        if let (Ok(v), Ok(fa), Ok(fb), Ok(f0)) = (e.diff(i).eval(&x), e.eval(&a), e.eval(&b), e.eval(&x)) {
            // Skip points near singularities, where the difference quotient itself is unreliable.
            let curv = e.diff(i).diff(i).diff(i).eval(&x).unwrap_or(f64::INFINITY);
            prop_assume!(curv.abs() < 1e3 && f0.abs() < 1e6);
            let fd = (fa - fb) / (2.0 * h);
            prop_assert!((v - fd).abs() <= 1e-6 * (1.0 + v.abs()), "{}: {} vs {}", e, v, fd);
        }
    }
}
