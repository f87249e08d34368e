use std::f64::consts::LN_2;
use nalgebra::{DMatrix, DVector};
use polset_core::bichar::integrate_strip;
use polset_core::exprs::ExprMatrix;
use polset_core::geometry::{CausalOrder, ChartDomain, CovectorClass, PhasePoint, SpacetimeModel};
use polset_core::ode::StepControl;
use proptest::prelude::*;

fn flrw() -> SpacetimeModel {
    SpacetimeModel::flrw_exponential(4, 1.0).unwrap()
}

#[test]
fn metric_examples() {
    let eta = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0, -1.0, -1.0]));
    let m = SpacetimeModel::minkowski(4).unwrap();
    let g = m.metric_at(&[5.0, -3.0, 1.0, 2.0]).unwrap();
    assert_eq!(g.low, eta);
    assert_eq!(g.inv, eta);

    let g = flrw().metric_at(&[0.0, 0.3, 0.1, 0.2]).unwrap();
    assert!((g.low - &eta).amax() < 1e-15);

    let custom = SpacetimeModel::custom(
        ExprMatrix::parse_rows(&[vec!["1 + x1^2", "0"], vec!["0", "-1"]]).unwrap(),
        ChartDomain::unbounded(2),
        0,
    )
    .unwrap();
    let g = custom.metric_at(&[0.0, 2.0]).unwrap();
    // scalar inversion oracle
    assert!((g.inv[(0, 0)] - 1.0 / 5.0).abs() < 1e-15);
    assert!((&g.low * &g.inv - DMatrix::identity(2, 2)).amax() <= 1e-12);
}

#[test]
fn singular_metric_rejected() {
    let m = SpacetimeModel::custom(
        ExprMatrix::parse_rows(&[vec!["x0", "0"], vec!["0", "-1"]]).unwrap(),
        ChartDomain { bounds: vec![(0.5, 2.0), (-1.0, 1.0)] },
        0,
    )
    .unwrap();
    assert!(m.metric_at(&[0.0, 0.0]).is_err());
}

#[test]
fn christoffel_examples() {
    let m = SpacetimeModel::minkowski(4).unwrap();
    let c = m.christoffel_at(&[0.1, 0.2, 0.3, 0.4]).unwrap();
    for l in 0..4 {
        for a in 0..4 {
            for b in 0..4 {
                assert_eq!(c.get(l, a, b), 0.0);
            }
        }
    }

    // diag(1, -x0²): Γ^1_{01} = ∂_0 g_11 / (2 g_11) = 1/x0
    let milne = SpacetimeModel::custom(
        ExprMatrix::parse_rows(&[vec!["1", "0"], vec!["0", "-x0^2"]]).unwrap(),
        ChartDomain { bounds: vec![(0.1, 10.0), (f64::NEG_INFINITY, f64::INFINITY)] },
        0,
    )
    .unwrap();
    let c = milne.christoffel_at(&[2.0, 0.0]).unwrap();
    assert!((c.get(1, 0, 1) - 0.5).abs() < 1e-15);
    assert_eq!(c.get(1, 0, 1), c.get(1, 1, 0));
    // Γ^0_{11} = -∂_0 g_11 / 2 = x0
    assert!((c.get(0, 1, 1) - 2.0).abs() < 1e-15);

    // conformal FLRW with a = e^{Hη}: Γ^0_{00} = Γ^0_{ii} = H, Γ^i_{0i} = H
    for h in [1.0, 0.4] {
        let m = SpacetimeModel::flrw_exponential(4, h).unwrap();
        let c = m.christoffel_at(&[0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((c.get(0, 1, 1) - h).abs() < 1e-14);
        assert!((c.get(0, 0, 0) - h).abs() < 1e-14);
        assert!((c.get(2, 0, 2) - h).abs() < 1e-14);
        assert!(c.get(1, 2, 3).abs() < 1e-15);
    }
}

#[test]
fn q_value_examples() {
    let m = SpacetimeModel::minkowski(4).unwrap();
    let null = PhasePoint::new(&[0.0; 4], &[1.0, 0.0, 0.0, 1.0]);
    assert_eq!(m.q_value(&null).unwrap(), 0.0);
    assert_eq!(m.classify(&null).unwrap(), CovectorClass::Null);
    let time = PhasePoint::new(&[0.0; 4], &[1.0, 0.0, 0.0, 0.0]);
    assert_eq!(m.q_value(&time).unwrap(), -1.0);
    assert_eq!(m.classify(&time).unwrap(), CovectorClass::Timelike);
    assert_eq!(m.classify(&PhasePoint::new(&[0.0; 4], &[0.0, 1.0, 0.0, 0.0])).unwrap(), CovectorClass::Spacelike);
    assert_eq!(m.classify(&PhasePoint::new(&[0.0; 4], &[0.0; 4])).unwrap(), CovectorClass::Zero);
    assert_eq!(flrw().q_value(&null).unwrap(), 0.0);
}

#[test]
fn hamiltonian_field_examples() {
    let m = SpacetimeModel::minkowski(4).unwrap();
    let (xd, kd) = m.hamiltonian_field(&PhasePoint::new(&[0.0; 4], &[1.0, 0.0, 0.0, 1.0])).unwrap();
    assert_eq!(xd.as_slice(), &[-2.0, 0.0, 0.0, 2.0]);
    assert_eq!(kd.as_slice(), &[0.0; 4]);

    let (xd, kd) = flrw().hamiltonian_field(&PhasePoint::new(&[0.3, 0.0, 0.0, 0.0], &[0.0; 4])).unwrap();
    assert!(xd.iter().chain(kd.iter()).all(|&v| v == 0.0));

    // FLRW: ẋ = -2 a⁻² η k, and k̇_μ = ∂_μ(a⁻²) η(k, k), which vanishes for null k.
    let (xd, kd) = flrw().hamiltonian_field(&PhasePoint::new(&[0.0; 4], &[1.0, 0.0, 0.0, 1.0])).unwrap();
    assert!((xd - DVector::from_vec(vec![-2.0, 0.0, 0.0, 2.0])).amax() < 1e-15);
    assert!(kd.amax() < 1e-15);
    // Non-null oracle: k = (1,0,0,0) at η = 0.2 gives k̇_0 = -2H e^{-2Hη}.
    let eta = 0.2;
    let (_, kd) = flrw().hamiltonian_field(&PhasePoint::new(&[eta, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0])).unwrap();
    assert!((kd[0] + 2.0 * (-2.0 * eta).exp()).abs() < 1e-14);
}

#[test]
fn sharp_flat_examples() {
    let m = SpacetimeModel::minkowski(4).unwrap();
    let k = DVector::from_vec(vec![1.0, 0.0, 0.0, 1.0]);
    assert_eq!(m.sharp(&[0.0; 4], &k).unwrap().as_slice(), &[1.0, 0.0, 0.0, -1.0]);
    let x = [LN_2, 0.0, 0.0, 0.0];
    let k = DVector::from_vec(vec![4.0, 8.0, -4.0, 2.0]);
    let s = flrw().sharp(&x, &k).unwrap();
    let want = [1.0, -2.0, 1.0, -0.5];
    for i in 0..4 {
        assert!((s[i] - want[i]).abs() < 1e-14);
    }
}

#[test]
fn causal_order_examples() {
    let m = SpacetimeModel::minkowski(4).unwrap();
    assert_eq!(m.causal_order(&[-2.0, 0.0, 0.0, 2.0], &[0.0; 4]).unwrap(), CausalOrder::Past);
    let c = m.causal_order(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
    assert!(c.in_future() && c.in_past());
    assert_eq!(m.causal_order(&[0.0, 1.0, 0.0, 0.0], &[0.0; 4]).unwrap(), CausalOrder::Unrelated);
    assert_eq!(m.causal_order(&[3.0, 1.0, 1.0, 0.0], &[0.0; 4]).unwrap(), CausalOrder::Future);
}

#[test]
fn density_examples() {
    let m = SpacetimeModel::minkowski(4).unwrap();
    assert_eq!(m.metric_density_power(&[0.0; 4], 0.5).unwrap(), 1.0);
    assert!((flrw().metric_density_power(&[0.0; 4], 0.5).unwrap() - 1.0).abs() < 1e-15);
    let x = [LN_2, 0.0, 0.0, 0.0];
    assert!((flrw().metric_density_power(&x, 0.25).unwrap() - 4.0).abs() < 1e-13);
    // det g > 0 for a Lorentzian metric in odd dimension.
    let m3 = SpacetimeModel::flrw_exponential(3, 1.0).unwrap();
    assert!((m3.metric_density_power(&[LN_2, 0.0, 0.0], 0.5).unwrap() - 8.0).abs() < 1e-13);
    assert_eq!(SpacetimeModel::minkowski(3).unwrap().metric_density_power(&[0.0; 3], 0.5).unwrap(), 1.0);
}

fn random_null(rng_vals: [f64; 3], sign: f64) -> Vec<f64> {
    let n = (rng_vals[0].powi(2) + rng_vals[1].powi(2) + rng_vals[2].powi(2)).sqrt();
    vec![sign * n, rng_vals[0], rng_vals[1], rng_vals[2]]
}

/// Exact null flow in conformal FLRW with `a = e^η`: `k` is constant,
/// `e^{2η} = e^{2η₀} - 4 k₀ λ`, and the path is the straight null line.
fn exact_null_residual(m: &SpacetimeModel, p0: &PhasePoint, length: f64) -> f64 {
    let strip = integrate_strip(m, p0, (0.0, length), &StepControl::default()).unwrap();
    let eta0 = p0.x[0];
    let k = &p0.k;
    let dir = [k[0], -k[1], -k[2], -k[3]];
    let mut worst: f64 = 0.0;
    for s in strip.samples() {
        let eta = (0.5 * ((2.0 * eta0).exp() - 4.0 * k[0] * s.lambda).ln()) as f64;
        worst = worst.max((s.x[0] - eta).abs());
        for i in 1..4 {
            let xi = p0.x[i] + (eta - eta0) * dir[i] / dir[0];
            worst = worst.max((s.x[i] - xi).abs());
        }
        for mu in 0..4 {
            worst = worst.max((s.k[mu] - k[mu]).abs());
        }
    }
    worst
}

/// Five-point finite-difference acceleration of the flow against `-Γ ẋ ẋ` at the
/// strip samples. Each stencil point comes from a short, tightly toleranced solve.
fn geodesic_fd_residual(m: &SpacetimeModel, p0: &PhasePoint, length: f64) -> f64 {
    let strip = integrate_strip(m, p0, (0.0, length), &StepControl::default()).unwrap();
    let tight = StepControl { tol: 1e-15, h_max: 0.005, ..StepControl::default() };
    let h = 2e-3;
    let mut worst: f64 = 0.0;
    for s in strip.samples().iter().step_by(17) {
        let base = PhasePoint::new(&s.x, &s.k);
        let at = |d: f64| -> Vec<f64> {
            let r = if d > 0.0 { (0.0, d) } else { (d, 0.0) };
            let st = integrate_strip(m, &base, r, &tight).unwrap();
            let smp = st.samples();
            let end = if d > 0.0 { smp.last().unwrap() } else { smp.first().unwrap() };
            assert_eq!(end.lambda, d);
            end.x.clone()
        };
        let (m2, m1, p1, p2) = (at(-2.0 * h), at(-h), at(h), at(2.0 * h));
        let gam = m.christoffel_at(&s.x).unwrap();
        for l in 0..4 {
            let acc = (-p2[l] + 16.0 * p1[l] - 30.0 * s.x[l] + 16.0 * m1[l] - m2[l]) / (12.0 * h * h);
            let mut rhs = 0.0;
            for mu in 0..4 {
                for nu in 0..4 {
                    rhs -= gam.get(l, mu, nu) * s.xdot[mu] * s.xdot[nu];
                }
            }
            worst = worst.max((acc - rhs).abs());
        }
    }
    worst
}

#[test]
fn flow_invariants_flrw() {
    let m = flrw();
    for (i, sp) in [[0.3, -0.2, 0.9], [1.0, 0.0, 0.0], [-0.4, 0.7, 0.1]].iter().enumerate() {
        // future-directed (k_0 < 0) so the strip stays in the chart for λ ≤ 10
        let k = random_null(*sp, -1.0);
        let p0 = PhasePoint::new(&[0.1 * i as f64, 0.0, 0.5, -0.5], &k);
        let strip = integrate_strip(&m, &p0, (0.0, 10.0), &StepControl::default()).unwrap();
        assert!(!strip.truncated());
        assert!(strip.max_q_drift(&m).unwrap() <= 1e-9);
        assert!(strip.max_momentum_residual(&m).unwrap() <= 1e-9);
        let r = exact_null_residual(&m, &p0, 10.0);
        assert!(r <= 1e-8, "{r}");
        let fd = geodesic_fd_residual(&m, &p0, 10.0);
        assert!(fd <= 1e-7, "{fd}");
    }
}

#[test]
fn flrw_past_flow_truncates_at_chart_edge() {
    let m = flrw();
    let p0 = PhasePoint::new(&[0.0; 4], &[1.0, 0.0, 0.0, 1.0]);
    let strip = integrate_strip(&m, &p0, (0.0, 10.0), &StepControl::default()).unwrap();
    assert!(strip.truncated_high());
    assert!(strip.lambda_max() < 10.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sharp_flat_inverse(k in prop::collection::vec(-3.0f64..3.0, 4), t in -1.0f64..1.0) {
        let m = flrw();
        let x = [t, 0.2, -0.1, 0.4];
        let kv = DVector::from_vec(k);
        let back = m.flat(&x, &m.sharp(&x, &kv).unwrap()).unwrap();
        prop_assert!((back - &kv).amax() <= 1e-12 * (1.0 + kv.amax()));
    }

    #[test]
    fn metric_inverse_accuracy(t in -3.5f64..3.5) {
        let g = flrw().metric_at(&[t, 0.0, 0.0, 0.0]).unwrap();
        prop_assert!((&g.low * &g.inv - DMatrix::identity(4, 4)).amax() <= 1e-12);
    }

    #[test]
    fn non_null_q_conservation(k in prop::collection::vec(-1.0f64..1.0, 4)) {
        prop_assume!(k.iter().map(|v| v * v).sum::<f64>() > 0.1);
        let m = flrw();
        let p0 = PhasePoint::new(&[0.0, 0.0, 0.0, 0.0], &k);
        let strip = integrate_strip(&m, &p0, (-0.5, 0.5), &StepControl::default()).unwrap();
        prop_assume!(!strip.truncated());
        prop_assert!(strip.max_q_drift(&m).unwrap() <= 1e-9);
        prop_assert!(strip.max_momentum_residual(&m).unwrap() <= 1e-9);
    }
}
