//! Classic RK4 with step-doubling error control.

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepControl {
    /// Per-step tolerance on the extrapolated error estimate, component `i` scaled
    /// by `1 + |y_i|`.
    pub tol: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub h_init: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { tol: 1e-10, h_max: 0.05, h_min: 1e-12, h_init: 0.01, max_steps: 5_000_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum OdeError {
    #[error("step size collapsed to {h:e} at t = {t}")]
    StepCollapse { t: f64, h: f64 },
    #[error("step budget exhausted at t = {t}")]
    TooManySteps { t: f64 },
}

/// How an integration ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stop {
    Reached,
    /// The right-hand side refused to evaluate (e.g. the chart boundary) and the
    /// step could not be shrunk further.
    Boundary,
}

struct Work {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Work {
    fn new(n: usize) -> Self {
        Work { k1: vec![0.0; n], k2: vec![0.0; n], k3: vec![0.0; n], k4: vec![0.0; n], tmp: vec![0.0; n] }
    }
}

fn rk4<F>(f: &mut F, t: f64, y: &[f64], h: f64, out: &mut [f64], w: &mut Work) -> bool
where
    F: FnMut(f64, &[f64], &mut [f64]) -> bool,
{
    let n = y.len();
    if !f(t, y, &mut w.k1) {
        return false;
    }
    for i in 0..n {
        w.tmp[i] = y[i] + 0.5 * h * w.k1[i];
    }
    if !f(t + 0.5 * h, &w.tmp, &mut w.k2) {
        return false;
    }
    for i in 0..n {
        w.tmp[i] = y[i] + 0.5 * h * w.k2[i];
    }
    if !f(t + 0.5 * h, &w.tmp, &mut w.k3) {
        return false;
    }
    for i in 0..n {
        w.tmp[i] = y[i] + h * w.k3[i];
    }
    if !f(t + h, &w.tmp, &mut w.k4) {
        return false;
    }
    for i in 0..n {
        out[i] = y[i] + h / 6.0 * (w.k1[i] + 2.0 * w.k2[i] + 2.0 * w.k3[i] + w.k4[i]);
    }
    true
}

/// Integrates `y' = f(t, y)` from `t0` to `t1` (either direction). `f` writes the
/// derivative and returns `false` when it cannot be evaluated. `on_accept` sees
/// every accepted `(t, y)`, the endpoint included.
pub fn integrate<F, S>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t1: f64,
    ctrl: &StepControl,
    mut on_accept: S,
) -> Result<Stop, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> bool,
    S: FnMut(f64, &[f64]),
{
    let n = y0.len();
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut w = Work::new(n);
    let mut full = vec![0.0; n];
    let mut mid = vec![0.0; n];
    let mut two = vec![0.0; n];
    let mut h = ctrl.h_init.min(ctrl.h_max);
    let mut steps = 0usize;
    while t != t1 {
        steps += 1;
        if steps > ctrl.max_steps {
            return Err(OdeError::TooManySteps { t });
        }
        let remaining = (t1 - t).abs();
        let last = h >= remaining;
        let hs = if last { remaining } else { h } * dir;
        let ok = rk4(&mut f, t, &y, hs, &mut full, &mut w)
            && rk4(&mut f, t, &y, 0.5 * hs, &mut mid, &mut w)
            && rk4(&mut f, t + 0.5 * hs, &mid, 0.5 * hs, &mut two, &mut w);
        if !ok {
            h = hs.abs() * 0.5;
            if h < ctrl.h_min {
                return Ok(Stop::Boundary);
            }
            continue;
        }
        let err = full.iter().zip(&two).map(|(a, b)| (b - a).abs() / (1.0 + b.abs())).fold(0.0, f64::max) / 15.0;
        if err <= ctrl.tol {
            for i in 0..n {
                y[i] = two[i] + (two[i] - full[i]) / 15.0;
            }
            t = if last { t1 } else { t + hs };
            on_accept(t, &y);
            let grow = if err == 0.0 { 5.0 } else { (0.9 * (ctrl.tol / err).powf(0.2)).min(5.0) };
            h = (hs.abs() * grow.max(1.0)).min(ctrl.h_max);
        } else {
            h = hs.abs() * (0.9 * (ctrl.tol / err).powf(0.2)).max(0.2);
            if h < ctrl.h_min {
                return Err(OdeError::StepCollapse { t, h });
            }
        }
    }
    Ok(Stop::Reached)
}
