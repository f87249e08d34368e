use std::sync::Arc;

use nalgebra::{DMatrix, Vector3, Vector4};
use polset_core::bichar::{integrate_strip, RelationParams};
use polset_core::exprs::{parse, Expr, ExprMatrix};
use polset_core::geometry::{ChartDomain, PhasePoint, SpacetimeModel};
use polset_core::nhop::{half_density_conjugate, weitzenboeck_extract, NHOperatorSpec};
use polset_core::ode::StepControl;
use polset_core::polsets::{in_r, RelationPoint, Verdict};
use polset_core::proca::{
    levi_civita_forms, minkowski_pairing, null_covector, ricci_at, v_from_z, z_from_v, ProcaContext, ProcaError,
};
use polset_core::symbols::sample_points;
use proptest::prelude::*;

fn minkowski() -> Arc<SpacetimeModel> {
    Arc::new(SpacetimeModel::minkowski(4).unwrap())
}

fn flrw() -> Arc<SpacetimeModel> {
    Arc::new(SpacetimeModel::flrw_exponential(4, 1.0).unwrap())
}

fn chart_points(n: usize, seed: u64) -> Vec<Vec<f64>> {
    sample_points(4, n, seed).into_iter().map(|(x, _)| x).collect()
}

fn max_diff(a: &ExprMatrix, b: &ExprMatrix, pts: &[Vec<f64>]) -> f64 {
    pts.iter().map(|x| (a.eval(x).unwrap() - b.eval(x).unwrap()).amax()).fold(0.0, f64::max)
}

fn related_point(m: &SpacetimeModel, pp: &PhasePoint, lambda: f64) -> RelationPoint {
    let strip = integrate_strip(m, pp, (0.0, lambda), &StepControl::default()).unwrap();
    let st = strip.state_at(lambda);
    let rp = in_r(m, &PhasePoint::new(&st.x, &st.k), &pp.flipped(), &RelationParams::default());
    assert_eq!(rp.r, Verdict::In);
    rp
}

/// Conformally flat oracle for `g = e^{2ω(x0)} η` in `n` dimensions:
/// `R_ab = -(n-2)(∂_a∂_b ω - ∂_aω ∂_bω) - η_ab(□ω + (n-2)(∂ω)²)`.
fn conformal_ricci(n: usize, w1: f64, w2: f64) -> DMatrix<f64> {
    let nf = n as f64 - 2.0;
    let trace = w2 + nf * w1 * w1;
    DMatrix::from_fn(n, n, |a, b| {
        let eta = if a != b { 0.0 } else if a == 0 { 1.0 } else { -1.0 };
        let hess = if a == 0 && b == 0 { w2 - w1 * w1 } else { 0.0 };
        -nf * hess - eta * trace
    })
}

#[test]
fn ricci_examples() {
    assert_eq!(ricci_at(&minkowski(), &[0.3, 0.1, 0.2, 0.4]).unwrap().amax(), 0.0);

    // ω = 0.3η + 0.1η².
    let a = parse("exp(0.3*x0 + 0.1*x0^2)").unwrap();
    for n in [3, 4] {
        let m = SpacetimeModel::flrw(n, a.clone()).unwrap();
        for x0 in [-0.5, 0.0, 0.8] {
            let mut x = vec![0.2; n];
            x[0] = x0;
            let w1 = 0.3 + 0.2 * x0;
            let lower = conformal_ricci(n, w1, 0.2);
            let want = lower * m.metric_at(&x).unwrap().inv;
            let got = ricci_at(&m, &x).unwrap();
            assert!((got - &want).amax() <= 1e-7 * (1.0 + want.amax()), "n={n} x0={x0}");
        }
    }
    let m = flrw();
    let want = conformal_ricci(4, 1.0, 0.0) * m.metric_at(&[0.4, 0.0, 0.0, 0.0]).unwrap().inv;
    assert!((ricci_at(&m, &[0.4, 0.0, 0.0, 0.0]).unwrap() - want).amax() <= 1e-7);
}

#[test]
fn ricci_in_two_dimensions() {
    // Milne wedge is flat.
    let milne = SpacetimeModel::custom(
        ExprMatrix::parse_rows(&[vec!["1", "0"], vec!["0", "-x0^2"]]).unwrap(),
        ChartDomain { bounds: vec![(0.1, 10.0), (f64::NEG_INFINITY, f64::INFINITY)] },
        0,
    )
    .unwrap();
    assert!(ricci_at(&milne, &[1.7, 0.3]).unwrap().amax() < 1e-14);

    // dt² - f(t)² dx² has R_μ^ν = -(f''/f) δ_μ^ν; f = e^{x0} gives -I.
    let ds2 = SpacetimeModel::custom(
        ExprMatrix::parse_rows(&[vec!["1", "0"], vec!["0", "-exp(2*x0)"]]).unwrap(),
        ChartDomain::unbounded(2),
        0,
    )
    .unwrap();
    for x in [[0.0, 0.0], [0.7, -1.2], [-1.3, 2.0]] {
        let r = ricci_at(&ds2, &x).unwrap();
        assert!((&r + DMatrix::identity(2, 2)).amax() < 1e-12, "{r}");
    }
}

#[test]
fn kg1_examples() {
    let ctx = ProcaContext::new(minkowski(), 1.5).unwrap();
    let k = ctx.kg1_spec().unwrap();
    let pts = chart_points(5, 1);
    assert!(k.first_order().iter().all(ExprMatrix::is_zero));
    let want = ExprMatrix::identity(4).scale(&Expr::num(2.25));
    assert_eq!(max_diff(k.potential(), &want, &pts), 0.0);
    assert!(weitzenboeck_extract(&k).is_zero());

    let m = flrw();
    let ctx = ProcaContext::new(m.clone(), 0.8).unwrap();
    let k = ctx.kg1_spec().unwrap();
    let ext = weitzenboeck_extract(&k);
    let lc = levi_civita_forms(&m);
    for mu in 0..4 {
        assert!(max_diff(&ext.forms()[mu], &lc.forms()[mu], &pts) <= 1e-10);
    }

    // Two paths to the half-densitised operator.
    let conj = half_density_conjugate(&ctx.kg1_function_form().unwrap(), 0.25).unwrap();
    for nu in 0..4 {
        assert!(max_diff(&conj.first_order()[nu], &k.first_order()[nu], &pts) <= 1e-10);
    }
    assert!(max_diff(conj.potential(), k.potential(), &pts) <= 1e-10);

    assert_eq!(ProcaContext::new(minkowski(), 0.0).unwrap_err(), ProcaError::Mass(0.0));
    assert!(ProcaContext::new(minkowski(), -1.0).is_err());
}

/// Applies an operator with matrix coefficients to the one-form `a`.
fn apply(op: &NHOperatorSpec, a: &[Expr]) -> Vec<Expr> {
    let coeffs = op.full_symbol().unwrap().operator_coefficients();
    let mut out = vec![Expr::zero(); a.len()];
    for (alpha, c) in coeffs {
        assert!(c.im.is_zero());
        for (row, slot) in out.iter_mut().enumerate() {
            for (col, comp) in a.iter().enumerate() {
                let coeff = c.re.get(row, col);
                if coeff.is_zero() {
                    continue;
                }
                let mut d = comp.clone();
                for (mu, &n) in alpha.0.iter().enumerate() {
                    for _ in 0..n {
                        d = d.diff(mu);
                    }
                }
                *slot = Expr::add(slot.clone(), Expr::mul(coeff.clone(), d));
            }
        }
    }
    out
}

#[test]
fn kg1_function_form_matches_weitzenboeck_formula() {
    // (K A)_μ = g^{αβ} ∇_α ∇_β A_μ + (m² δ_μ^ν + R_μ^ν) A_ν, built from Christoffel symbols.
    let m = flrw();
    let mass = 0.7;
    let ctx = ProcaContext::new(m.clone(), mass).unwrap();
    let a: Vec<Expr> =
        ["x0*sin(x1)", "x2 + 0.5*x0^2", "cos(x0 + x3)", "x1*x2"].iter().map(|s| parse(s).unwrap()).collect();
    let n = 4;
    let c = |l: usize, i: usize, j: usize| m.christoffel_expr(l, i, j).clone();
    // T_{βμ} = ∂_β A_μ - Γ^λ_{βμ} A_λ
    let t = |b: usize, mu: usize| {
        let mut e = a[mu].diff(b);
        for l in 0..n {
            e = Expr::sub(e, Expr::mul(c(l, b, mu), a[l].clone()));
        }
        e
    };
    let ginv = m.g_inv_expr();
    let ric = polset_core::proca::ricci_mixed_expr(&m);
    let want: Vec<Expr> = (0..n)
        .map(|mu| {
            let mut acc = Expr::zero();
            for al in 0..n {
                for be in 0..n {
                    let g = ginv.get(al, be).clone();
                    if g.is_zero() {
                        continue;
                    }
                    let mut dd = t(be, mu).diff(al);
                    for l in 0..n {
                        dd = Expr::sub(dd, Expr::mul(c(l, al, be), t(l, mu)));
                        dd = Expr::sub(dd, Expr::mul(c(l, al, mu), t(be, l)));
                    }
                    acc = Expr::add(acc, Expr::mul(g, dd));
                }
            }
            acc = Expr::add(acc, Expr::mul(Expr::num(mass * mass), a[mu].clone()));
            for nu in 0..n {
                acc = Expr::add(acc, Expr::mul(ric.get(mu, nu).clone(), a[nu].clone()));
            }
            acc
        })
        .collect();
    let got = apply(&ctx.kg1_function_form().unwrap(), &a);
    for x in chart_points(10, 2) {
        for mu in 0..n {
            let (g, w) = (got[mu].eval(&x).unwrap(), want[mu].eval(&x).unwrap());
            assert!((g - w).abs() <= 1e-10 * (1.0 + w.abs()), "component {mu}: {g} vs {w}");
        }
    }
}

#[test]
fn r_symbol_examples() {
    let ctx = ProcaContext::new(minkowski(), 1.0).unwrap();
    let k = [1.0, 0.0, 0.0, 1.0];
    let p = PhasePoint::new(&[0.0; 4], &k);
    let r = ctx.r_symbol(&p).unwrap();
    assert_eq!((&r * &p.k).norm(), 0.0);
    let dt = nalgebra::DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
    assert_eq!(&r * dt, -&p.k);

    let ctx = ProcaContext::new(flrw(), 2.0).unwrap();
    for (x, xi) in sample_points(4, 10, 3) {
        let r = ctx.r_symbol(&PhasePoint::new(&x, &xi)).unwrap();
        let sv = r.svd(false, false).singular_values;
        assert!(sv.iter().filter(|&&s| s > 1e-12 * sv.max()).count() <= 1);
    }
}

#[test]
fn predicted_fibre_and_constraints() {
    let ctx = ProcaContext::new(minkowski(), 1.0).unwrap();
    let k = PhasePoint::new(&[0.0; 4], &[1.0, 0.0, 0.0, 1.0]);
    let diag = in_r(&minkowski(), &k, &k.flipped(), &RelationParams::default());
    let f = ctx.predicted_fibre(&diag).unwrap();
    let ksharp = minkowski().sharp(&[0.0; 4], &k.k).unwrap();
    let w = (&k.k * ksharp.transpose()).map(|v| num_complex::Complex64::new(v, 0.0));
    assert!(f.distance(&w) < 1e-15);

    let rp = related_point(&minkowski(), &PhasePoint::new(&[0.0; 4], &[1.0, 0.6, 0.0, 0.8]), 1.2);
    let basis = ctx.predicted_basis(&rp).unwrap();
    let (l, r) = ctx.constraint_residuals(&rp, &basis).unwrap();
    assert!(l <= 1e-12 && r <= 1e-12);

    let m = flrw();
    let ctx = ProcaContext::new(m.clone(), 1.0).unwrap();
    let kg1 = ctx.kg1_spec().unwrap();
    let rp = related_point(&m, &PhasePoint::new(&[0.1, 0.0, 0.2, 0.0], &[-1.0, 0.0, 0.6, 0.8]), 1.5);
    let (l, r) = ctx.constraint_residuals(&rp, &ctx.predicted_basis(&rp).unwrap()).unwrap();
    assert!(l <= 1e-9 && r <= 1e-9, "{l} {r}");
    let (left, right) = ctx.chain_consistency(&kg1, &rp).unwrap();
    assert!(left <= 1e-6 && right <= 1e-6, "{left} {right}");
}

#[test]
fn z_from_v_examples() {
    let z = z_from_v(&Vector3::new(0.0, 0.0, 1.0), 1.0, &Vector3::new(1.0, 0.0, 0.0)).unwrap();
    assert_eq!(z, Vector4::new(0.0, 1.0, 0.0, 0.0));

    let ks = Vector3::new(0.3, -1.2, 0.5);
    let z = z_from_v(&ks, -1.0, &(ks * 2.0)).unwrap();
    assert!((z[0] - 2.0 * ks.norm_squared()).abs() < 1e-14);
    assert!(minkowski_pairing(&null_covector(&ks, -1.0), &z).abs() < 1e-12);

    assert_eq!(z_from_v(&Vector3::zeros(), 1.0, &ks), Err(ProcaError::ZeroMomentum));
}

proptest! {
    #[test]
    fn z_from_v_is_orthogonal_and_onto(
        k in prop::array::uniform3(-2.0f64..2.0),
        v in prop::array::uniform3(-2.0f64..2.0),
        sign in prop_oneof![Just(1.0), Just(-1.0)],
    ) {
        let ks = Vector3::from(k);
        prop_assume!(ks.norm() > 1e-3);
        let kc = null_covector(&ks, sign);
        let z = z_from_v(&ks, sign, &Vector3::from(v)).unwrap();
        prop_assert!(minkowski_pairing(&kc, &z).abs() <= 1e-12 * (1.0 + kc.norm() * z.norm()));

        // Any z with k·z = 0: project a generic vector onto the annihilator and solve back.
        let raw = Vector4::new(v[1], v[2], v[0], k[0]);
        let ksharp = Vector4::new(kc[0], -kc[1], -kc[2], -kc[3]);
        let target = raw - ksharp * (ksharp.dot(&raw) / ksharp.norm_squared());
        prop_assert!(minkowski_pairing(&kc, &target).abs() < 1e-10);
        let back = z_from_v(&ks, sign, &v_from_z(&ks, sign, &target).unwrap()).unwrap();
        prop_assert!((back - target).norm() <= 1e-10 * (1.0 + target.norm()));
    }
}

#[test]
fn wf_claim_examples() {
    let mut cases = vec![
        (minkowski(), PhasePoint::new(&[0.0; 4], &[1.0, 0.6, 0.0, 0.8]), 1.0),
        (minkowski(), PhasePoint::new(&[0.5, 0.1, 0.0, -0.2], &[-2.0, 0.0, 2.0, 0.0]), 0.4),
    ];
    cases.push((flrw(), PhasePoint::new(&[0.0, 0.3, 0.0, 0.0], &[-1.0, 0.8, 0.6, 0.0]), 1.3));
    for (m, pp, lambda) in cases {
        let ctx = ProcaContext::new(m.clone(), 1.2).unwrap();
        let kg1 = ctx.kg1_spec().unwrap();
        let rp = related_point(&m, &pp, lambda);
        let claim = ctx.wf_claim(&kg1, &rp).unwrap();
        assert!(claim.claim.nonzero);
        assert!(!claim.control.nonzero);
        assert_eq!(claim.control.norm, 0.0);
    }
}
