use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use polset_core::exprs::{parse, Expr, ExprMatrix};
use polset_core::geometry::{PhasePoint, SpacetimeModel};
use polset_core::nhop::{
    dual_connection, half_density_conjugate, nhop_subprincipal, reconstruct, verify_psub_identity,
    weitzenboeck_extract, ConnectionForms, NHOperatorSpec,
};
use polset_core::symbols::{sample_points, MultiIndex};

fn mat(rows: &[&[&str]]) -> ExprMatrix {
    let rows: Vec<Vec<&str>> = rows.iter().map(|r| r.to_vec()).collect();
    ExprMatrix::parse_rows(&rows).unwrap()
}

fn one(s: &str) -> ExprMatrix {
    mat(&[&[s]])
}

fn minkowski(dim: usize) -> Arc<SpacetimeModel> {
    Arc::new(SpacetimeModel::minkowski(dim).unwrap())
}

fn flrw(dim: usize) -> Arc<SpacetimeModel> {
    Arc::new(SpacetimeModel::flrw_exponential(dim, 1.0).unwrap())
}

fn max_diff(a: &ExprMatrix, b: &ExprMatrix, pts: &[Vec<f64>]) -> f64 {
    pts.iter().map(|x| (a.eval(x).unwrap() - b.eval(x).unwrap()).amax()).fold(0.0, f64::max)
}

fn points(dim: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    sample_points(dim, n, seed).into_iter().map(|(x, _)| x).collect()
}

/// Rank-2 operator on Minkowski 4D with x-dependent first-order terms.
fn rank2_operator(m: Arc<SpacetimeModel>) -> NHOperatorSpec {
    let c = vec![
        mat(&[&["x1", "sin(x0)"], &["0.3", "x2*x3"]]),
        mat(&[&["0", "1"], &["-1", "0"]]),
        mat(&[&["cos(x3)", "0"], &["x0", "0.5"]]),
        mat(&[&["0.2*x1", "0"], &["0", "exp(0.1*x2)"]]),
    ];
    NHOperatorSpec::new(m, 2, c, mat(&[&["1", "x0"], &["x1", "2"]])).unwrap()
}

#[test]
fn extraction_examples() {
    let p = NHOperatorSpec::pure_box(minkowski(4), 3);
    assert!(weitzenboeck_extract(&p).is_zero());

    // C^ν = 2 η^{νμ} A_μ recovers Γ_μ = A_μ.
    let a = ["x1", "sin(x0)", "0", "x2^2"];
    let eta = [1.0, -1.0, -1.0, -1.0];
    let c = (0..4).map(|nu| ExprMatrix::from_fn(1, 1, |_, _| Expr::mul(Expr::num(2.0 * eta[nu]), parse(a[nu]).unwrap())));
    let p = NHOperatorSpec::new(minkowski(4), 1, c.collect(), one("0")).unwrap();
    let gamma = weitzenboeck_extract(&p);
    let pts = points(4, 10, 1);
    for (mu, src) in a.iter().enumerate() {
        assert!(max_diff(&gamma.forms()[mu], &one(src), &pts) < 1e-15, "Γ_{mu}");
    }
}

#[test]
fn subprincipal_examples() {
    let p = NHOperatorSpec::pure_box(flrw(4), 2);
    let pt = PhasePoint::new(&[0.3, 0.1, 0.2, -0.4], &[1.0, 0.5, 0.0, 1.0]);
    assert_eq!(nhop_subprincipal(&p, &pt).unwrap().norm(), 0.0);

    // Γ = dt, k = (1, 0, 0, 1): 2i η^{0ν} k_ν = 2i.
    let c = vec![one("2"), one("0"), one("0"), one("0")];
    let p = NHOperatorSpec::new(minkowski(4), 1, c, one("0")).unwrap();
    let v = nhop_subprincipal(&p, &PhasePoint::new(&[0.0; 4], &[1.0, 0.0, 0.0, 1.0])).unwrap();
    assert!((v[(0, 0)] - Complex64::new(0.0, 2.0)).norm() < 1e-15);

    let p = rank2_operator(minkowski(4));
    let v = nhop_subprincipal(&p, &PhasePoint::new(&[0.4, 0.2, -0.1, 0.8], &[0.0; 4])).unwrap();
    assert_eq!(v.norm(), 0.0);
}

#[test]
fn psub_identity_examples() {
    let pt = PhasePoint::new(&[0.3, 0.1, 0.2, -0.4], &[1.0, 0.5, 0.0, 1.0]);
    let p = NHOperatorSpec::pure_box(minkowski(4), 1);
    assert_eq!(verify_psub_identity(&p, &pt).unwrap(), 0.0);

    for dim in 2..=4 {
        let p = NHOperatorSpec::pure_box(flrw(dim), 1);
        for (x, k) in sample_points(dim, 10, 7) {
            let r = verify_psub_identity(&p, &PhasePoint::new(&x, &k)).unwrap();
            assert!(r <= 1e-9, "dim {dim}: {r}");
        }
    }

    for m in [minkowski(4), flrw(4)] {
        let p = rank2_operator(m);
        for (x, k) in sample_points(4, 20, 8) {
            let r = verify_psub_identity(&p, &PhasePoint::new(&x, &k)).unwrap();
            assert!(r <= 1e-9, "{r}");
        }
    }
}

#[test]
fn dual_connection_examples() {
    assert!(dual_connection(&ConnectionForms::zero(3, 2)).is_zero());

    let g = ConnectionForms::new(1, vec![one("x1"), one("-2")]);
    let d = dual_connection(&g);
    let pts = points(2, 5, 2);
    assert!(max_diff(&d.forms()[0], &one("-x1"), &pts) < 1e-15);
    assert!(max_diff(&d.forms()[1], &one("2"), &pts) < 1e-15);

    let g = weitzenboeck_extract(&rank2_operator(minkowski(4)));
    let d = dual_connection(&g);
    for x in points(4, 5, 3) {
        for (a, b) in g.eval_at(&x).unwrap().iter().zip(d.eval_at(&x).unwrap()) {
            assert_eq!(b, -a.transpose());
        }
    }
    assert_eq!(dual_connection(&d), g);
}

#[test]
fn conjugation_is_trivial_for_constant_density() {
    let p = rank2_operator(minkowski(4));
    let q = half_density_conjugate(&p, 0.25).unwrap();
    let pts = points(4, 5, 4);
    for nu in 0..4 {
        assert_eq!(max_diff(&p.first_order()[nu], &q.first_order()[nu], &pts), 0.0);
    }
    assert_eq!(max_diff(p.potential(), q.potential(), &pts), 0.0);
}

#[test]
fn conjugation_round_trip() {
    let p = rank2_operator(flrw(4));
    let pts: Vec<Vec<f64>> = points(4, 10, 5).into_iter().map(|mut x| {
        x[0] *= 0.5;
        x
    }).collect();
    for alpha in [0.25, -0.25] {
        let back = half_density_conjugate(&half_density_conjugate(&p, alpha).unwrap(), -alpha).unwrap();
        for nu in 0..4 {
            assert!(max_diff(&p.first_order()[nu], &back.first_order()[nu], &pts) <= 1e-12);
        }
        assert!(max_diff(p.potential(), back.potential(), &pts) <= 1e-12);
    }
    assert!(half_density_conjugate(&p, 0.3).is_err());
}

#[test]
fn conjugation_recovers_scalar_wave_operator_on_flrw() {
    // (-g)^{-1/4} □_half (-g)^{1/4} is the scalar wave operator. With a = e^{x0} in
    // n dimensions it reads e^{-2x0}(∂_0² + (n-2)∂_0 - Σ ∂_i²).
    for n in 2..=4 {
        let m = flrw(n);
        let scalar = half_density_conjugate(&NHOperatorSpec::pure_box(m, 1), -0.25).unwrap();
        let ops = scalar.full_symbol().unwrap().operator_coefficients();
        let pts: Vec<Vec<f64>> = points(n, 8, 6).into_iter().map(|mut x| {
            x[0] *= 0.5;
            x
        }).collect();
        let coeff = |alpha: MultiIndex| ops.get(&alpha).map(|c| (c.re.clone(), c.im.clone()));
        let expect = |alpha: MultiIndex, want: &dyn Fn(&[f64]) -> f64| {
            let (re, im) = coeff(alpha.clone()).unwrap_or((one("0"), one("0")));
            for x in &pts {
                let got = re.eval(x).unwrap()[(0, 0)];
                assert!((got - want(x)).abs() < 1e-12, "n={n} {alpha}: {got} vs {}", want(x));
                assert!(im.eval(x).unwrap()[(0, 0)].abs() < 1e-12);
            }
        };
        expect(MultiIndex::zero(n), &|_| 0.0);
        expect(MultiIndex::unit(n, 0), &|x| (n as f64 - 2.0) * (-2.0 * x[0]).exp());
        expect(MultiIndex::pair(n, 0, 0), &|x| (-2.0 * x[0]).exp());
        for i in 1..n {
            expect(MultiIndex::unit(n, i), &|_| 0.0);
            expect(MultiIndex::pair(n, i, i), &|x| -(-2.0 * x[0]).exp());
        }
    }
}

#[test]
fn box_symbol_first_order_structure() {
    // i (∂_μ g^{μν}) ξ_ν with g^{00} = e^{-2x0}.
    let s = NHOperatorSpec::pure_box(flrw(4), 1).full_symbol().unwrap();
    let c0 = &s.coefficients()[&MultiIndex::unit(4, 0)];
    for x in points(4, 5, 7) {
        let v = c0.eval(&x).unwrap()[(0, 0)];
        assert!((v - Complex64::new(0.0, -2.0 * (-2.0 * x[0]).exp())).norm() < 1e-13);
    }
    for i in 1..4 {
        assert!(s.coefficients().get(&MultiIndex::unit(4, i)).is_none());
    }
}

#[test]
fn reconstruction_reproduces_coefficients() {
    for m in [minkowski(4), flrw(4)] {
        let p = rank2_operator(m.clone());
        let gamma = weitzenboeck_extract(&p);
        let back = reconstruct(m, &gamma, p.potential().clone()).unwrap();
        let pts = points(4, 10, 9);
        for nu in 0..4 {
            assert!(max_diff(&p.first_order()[nu], &back.first_order()[nu], &pts) <= 1e-12);
        }
        let diff: DMatrix<f64> = back.potential().eval(&pts[0]).unwrap() - p.potential().eval(&pts[0]).unwrap();
        assert_eq!(diff.amax(), 0.0);
    }
}
