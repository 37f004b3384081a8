//! Counterexample families whose scaling exponents pin down the range of `r`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::polynomials::{fit_decay_exponent, Polynomial};
use crate::report::ExperimentReport;
use crate::signals::{CutoffFamily, GridFunction};

/// Default grid density, samples per unit length.
pub const DEFAULT_RESOLUTION: usize = 1 << 22;

/// Minimum number of grid steps across `δ`.
pub const MIN_STEPS_PER_DELTA: f64 = 64.0;

/// Number of `x` samples across the window.
const WINDOW_SAMPLES: usize = 256;

/// Default `δ` ladder `2^{-6}, ..., 2^{-16}`.
pub fn default_delta_ladder() -> Vec<f64> {
    (6..=16).map(|k| 2f64.powi(-k)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Meta {
    Endpoint { d: usize, a: f64, b: f64 },
    RootOrder { k0: usize, t0: f64, a_big: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleInstance {
    pub p: Polynomial,
    pub delta: f64,
    pub f: GridFunction,
    pub g: GridFunction,
    pub window: (f64, f64),
    pub meta: Meta,
    /// `inf ρ` over the certified `t`-region (endpoint family only).
    pub rho_min: Option<f64>,
}

/// Indicator of `[a, a + len]` on a local grid of the given density, padded
/// by eight steps on each side, with `a` on a grid node.
fn local_indicator(a: f64, len: f64, resolution: usize) -> Result<GridFunction> {
    let step = 1.0 / resolution as f64;
    let steps = (len / step).round() as usize;
    let n = steps + 17;
    let lo = a - 8.0 * step;
    let values = (0..n).map(|i| if (8..=8 + steps).contains(&i) { 1.0 } else { 0.0 }).collect();
    GridFunction::new(lo, lo + (n - 1) as f64 * step, values)
}

fn check_resolution(delta: f64, resolution: usize) -> Result<()> {
    if delta * resolution as f64 + 1e-9 < MIN_STEPS_PER_DELTA {
        return Err(Error::ResolutionTooCoarse(format!(
            "δ = {delta} spans {} steps, need {MIN_STEPS_PER_DELTA}",
            delta * resolution as f64
        )));
    }
    Ok(())
}

/// `P(t) = t + ((1-t)/A)^d - 1/A^d`.
pub fn endpoint_polynomial(d: usize, a: f64) -> Polynomial {
    // ((1-t)/A)^d expanded binomially
    let mut c = vec![0.0; d + 1];
    let mut binom = 1.0;
    for (k, ck) in c.iter_mut().enumerate() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        *ck = sign * binom / a.powi(d as i32);
        binom = binom * (d - k) as f64 / (k + 1) as f64;
    }
    // the constant terms cancel
    c[0] = 0.0;
    c[1] += 1.0;
    Polynomial::from_full(&c)
}

/// `T_0(f, g)(x)` by trapezoid quadrature over `x - t ∈ supp f`.
fn t0_at(inst: &CounterexampleInstance, family: &CutoffFamily, x: f64) -> f64 {
    let (flo, fhi) = (inst.f.lo, inst.f.hi);
    let (a, b) = ((x - fhi).max(0.5), (x - flo).min(2.0));
    if !(b > a) {
        return 0.0;
    }
    let step = inst.f.step();
    let nodes = ((4.0 * (b - a) / step).ceil() as usize).clamp(256, 1 << 16);
    let h = (b - a) / nodes as f64;
    let mut s = 0.0;
    for i in 0..=nodes {
        let t = a + i as f64 * h;
        let fv = inst.f.eval(x - t);
        if fv == 0.0 {
            continue;
        }
        let gv = inst.g.eval(x - inst.p.eval(t));
        if gv == 0.0 {
            continue;
        }
        let w = if i == 0 || i == nodes { 0.5 } else { 1.0 };
        s += w * fv * gv * family.rho(t);
    }
    s * h
}

/// `H(f, g)(x) = ∫ f(x-t) g(x-P(t)) dt/t` over `x - t ∈ supp f`, which stays
/// away from `t = 0` on the root-order window.
fn h_at(inst: &CounterexampleInstance, x: f64) -> f64 {
    let (a, b) = (x - inst.f.hi, x - inst.f.lo);
    let step = inst.f.step();
    let nodes = ((4.0 * (b - a) / step).ceil() as usize).clamp(256, 1 << 16);
    let h = (b - a) / nodes as f64;
    let mut s = 0.0;
    for i in 0..=nodes {
        let t = a + i as f64 * h;
        if t == 0.0 {
            continue;
        }
        let fv = inst.f.eval(x - t);
        if fv == 0.0 {
            continue;
        }
        let gv = inst.g.eval(x - inst.p.eval(t));
        let w = if i == 0 || i == nodes { 0.5 } else { 1.0 };
        s += w * fv * gv / t;
    }
    s * h
}

fn window_points(w: (f64, f64), n: usize) -> Vec<f64> {
    (0..n).map(|i| w.0 + (w.1 - w.0) * i as f64 / (n - 1) as f64).collect()
}

/// `(∫_window |v|^r)^{1/r}` by the trapezoid rule on uniform window samples.
fn window_lr(w: (f64, f64), vals: &[f64], r: f64) -> f64 {
    let n = vals.len();
    let h = (w.1 - w.0) / (n - 1) as f64;
    let s: f64 = vals
        .iter()
        .enumerate()
        .map(|(i, v)| if i == 0 || i + 1 == n { 0.5 } else { 1.0 } * h * v.abs().powf(r))
        .sum();
    s.powf(1.0 / r)
}

/// Endpoint family with `A = d^{1/d}`, `B = A/10`, `f = 1_[0,δ]`,
/// `g = 1_[1/A^d, 1/A^d + δ]`; checks `T_0(f,g) >= δ/8` on the window.
pub fn build_counterexample_endpoint(d: usize, delta: f64, grid_resolution: usize) -> Result<CounterexampleInstance> {
    if d < 2 {
        return Err(invalid("d must be at least 2"));
    }
    if !(delta > 0.0 && delta < 0.1) {
        return Err(invalid("δ must lie in (0, 0.1)"));
    }
    check_resolution(delta, grid_resolution)?;
    let a = (d as f64).powf(1.0 / d as f64);
    let b = a / 10.0;
    let p = endpoint_polynomial(d, a);
    if p.coeff(1).abs() >= 1e-12 {
        return Err(Error::LinearTerm(p.coeff(1)));
    }
    let ad = a.powi(d as i32);
    let f = local_indicator(0.0, delta, grid_resolution)?;
    let g = local_indicator(1.0 / ad, delta, grid_resolution)?;
    let wl = b * delta.powf(1.0 / d as f64);
    let window = (1.0 + wl, 1.0 + 2.0 * wl);
    let family = CutoffFamily::new();
    let mut rho_min = f64::INFINITY;
    for x in window_points(window, 100) {
        for k in 0..=32 {
            let t = x - delta / 2.0 + (delta / 4.0) * k as f64 / 32.0;
            rho_min = rho_min.min(family.rho(t));
        }
    }
    let inst = CounterexampleInstance {
        p,
        delta,
        f,
        g,
        window,
        meta: Meta::Endpoint { d, a, b },
        rho_min: Some(rho_min),
    };
    for x in window_points(window, 100) {
        let v = t0_at(&inst, &family, x);
        if v < delta / 8.0 {
            return Err(invalid(format!("T_0(f,g)({x}) = {v} below δ/8")));
        }
    }
    Ok(inst)
}

/// Checks `f(x-t) g(x-P(t)) = 1` on `t ∈ [x-δ/2, x-δ/4]`, `x` in the window.
pub fn certified_region_holds(inst: &CounterexampleInstance, samples: usize) -> bool {
    let delta = inst.delta;
    window_points(inst.window, samples).into_iter().all(|x| {
        (0..=samples).all(|k| {
            let t = x - delta / 2.0 + (delta / 4.0) * k as f64 / samples as f64;
            inst.f.eval(x - t) == 1.0 && inst.g.eval(x - inst.p.eval(t)) == 1.0
        })
    })
}

/// `1/(rd) + 1 - 1/r`.
pub fn endpoint_exponent(d: usize, r: f64) -> f64 {
    1.0 / (r * d as f64) + 1.0 - 1.0 / r
}

/// `1/(r(k0+1)) + 1 - 1/r`.
pub fn rootorder_exponent(k0: usize, r: f64) -> f64 {
    1.0 / (r * (k0 as f64 + 1.0)) + 1.0 - 1.0 / r
}

pub fn check_holder(p1: f64, p2: f64, r: f64) -> Result<()> {
    if !(p1 > 0.0 && p2 > 0.0 && r > 0.0) || (1.0 / p1 + 1.0 / p2 - 1.0 / r).abs() > 1e-12 {
        return Err(Error::HolderViolated);
    }
    Ok(())
}

fn check_ladder(delta_list: &[f64]) -> Result<Vec<f64>> {
    if delta_list.len() < 5 {
        return Err(invalid("δ ladder needs at least 5 points"));
    }
    let mut ds = delta_list.to_vec();
    ds.sort_by(|a, b| b.total_cmp(a));
    let q = ds[1] / ds[0];
    if ds.windows(2).any(|w| ((w[1] / w[0]) / q - 1.0).abs() > 1e-9) {
        return Err(invalid("δ ladder must be geometric"));
    }
    Ok(ds)
}

fn scaling_report(
    name: &str,
    rows: Vec<(f64, f64)>,
    predicted: f64,
    tolerance: f64,
) -> Result<ExperimentReport> {
    let fit = fit_decay_exponent(&rows)?;
    let pass = (fit.slope - predicted).abs() <= tolerance;
    let mut report = ExperimentReport::new(name, &["delta", "ratio", "predicted_exponent", "fitted_slope", "pass"]);
    for (d, ratio) in &rows {
        report.push_row(vec![(*d).into(), (*ratio).into(), predicted.into(), fit.slope.into(), pass.into()]);
    }
    report.fit("slope", fit.slope);
    report.fit("intercept", fit.intercept);
    report.fit("r_squared", fit.r_squared);
    report.fit("predicted", predicted);
    report.flag("slope_matches", pass, true);
    report.flag("diverges", fit.slope < 0.0, false);
    Ok(report)
}

/// Slope tolerance on fitted exponents.
pub const SLOPE_TOLERANCE: f64 = 0.05;

/// Window-restricted `||T_0(f,g)||_{L^r} / (||f||_{p1} ||g||_{p2})` over the
/// `δ` ladder against the predicted exponent `1/(rd) + 1 - 1/r`.
pub fn endpoint_scaling_experiment(d: usize, r: f64, p1: f64, p2: f64, delta_list: &[f64]) -> Result<ExperimentReport> {
    endpoint_scaling_experiment_with(d, r, p1, p2, delta_list, DEFAULT_RESOLUTION)
}

pub fn endpoint_scaling_experiment_with(
    d: usize,
    r: f64,
    p1: f64,
    p2: f64,
    delta_list: &[f64],
    resolution: usize,
) -> Result<ExperimentReport> {
    check_holder(p1, p2, r)?;
    let ds = check_ladder(delta_list)?;
    let family = CutoffFamily::new();
    let rows: Vec<Result<(f64, f64, f64)>> = ds
        .par_iter()
        .map(|&delta| {
            let inst = build_counterexample_endpoint(d, delta, resolution)?;
            let vals: Vec<f64> = window_points(inst.window, WINDOW_SAMPLES).iter().map(|&x| t0_at(&inst, &family, x)).collect();
            let num = window_lr(inst.window, &vals, r);
            let den = inst.f.lp_norm(p1)? * inst.g.lp_norm(p2)?;
            Ok((delta, num / den, inst.rho_min.unwrap_or(f64::NAN)))
        })
        .collect();
    let mut pts = Vec::new();
    let mut rho_min = f64::INFINITY;
    for row in rows {
        let (d, ratio, rm) = row?;
        pts.push((d, ratio));
        rho_min = rho_min.min(rm);
    }
    let mut report = scaling_report("sharpness", pts, endpoint_exponent(d, r), SLOPE_TOLERANCE)?;
    report.fit("rho_min", rho_min);
    report.flag("rho_floor", rho_min >= 0.4, true);
    report.pass = report.flags.iter().filter(|(k, _)| *k != "diverges").all(|(_, v)| *v);
    Ok(report)
}

/// Root-order family: `f = 1_[-δ,δ]`, `g = 1_[c-δ, c+δ]` with
/// `c = t0 - P(t0)`, window `|x - t0| <= δ^{1/(k0+1)}/A`.
pub fn build_counterexample_rootorder(p: &Polynomial, t0: f64, k0: usize, delta: f64, a_big: f64) -> Result<CounterexampleInstance> {
    build_counterexample_rootorder_with(p, t0, k0, delta, a_big, DEFAULT_RESOLUTION)
}

pub fn build_counterexample_rootorder_with(
    p: &Polynomial,
    t0: f64,
    k0: usize,
    delta: f64,
    a_big: f64,
    resolution: usize,
) -> Result<CounterexampleInstance> {
    p.require_no_linear_term()?;
    if t0 == 0.0 || k0 == 0 {
        return Err(invalid("need t0 != 0 and k0 >= 1"));
    }
    if !(delta > 0.0 && delta < t0.abs() / 16.0) {
        return Err(invalid("δ must be small against |t0|"));
    }
    if !(a_big > 0.0) {
        return Err(invalid("A must be positive"));
    }
    check_resolution(2.0 * delta, resolution)?;
    let q = p.derivative().add_constant(-1.0);
    let span = 1e-3 * (1.0 + t0.abs());
    let roots = q.real_roots_with_orders(t0 - span, t0 + span, 1e-12 * (1.0 + q.max_abs_coeff()))?;
    match roots.iter().min_by(|a, b| (a.0 - t0).abs().total_cmp(&(b.0 - t0).abs())) {
        Some(&(r, order)) if (r - t0).abs() <= 1e-9 * (1.0 + t0.abs()) && order == k0 => {}
        Some(&(r, order)) => {
            return Err(invalid(format!("root of P'-1 near t0 is {r} with order {order}, expected order {k0}")));
        }
        None => return Err(invalid("t0 is not a root of P'-1")),
    }
    let c = t0 - p.eval(t0);
    let f = local_indicator(-delta, 2.0 * delta, resolution)?;
    let g = local_indicator(c - delta, 2.0 * delta, resolution)?;
    let half = delta.powf(1.0 / (k0 as f64 + 1.0)) / a_big;
    let window = (t0 - half, t0 + half);
    let tol = delta / 100.0;
    for x in window_points(window, 100) {
        for k in 0..=20 {
            let t = x - tol + 2.0 * tol * k as f64 / 20.0;
            if ((t - p.eval(t)) - c).abs() > tol {
                return Err(Error::ATooSmall);
            }
        }
    }
    Ok(CounterexampleInstance {
        p: p.clone(),
        delta,
        f,
        g,
        window,
        meta: Meta::RootOrder { k0, t0, a_big },
        rho_min: None,
    })
}

/// Default root-order instance: `P = t^3`, `t0 = 1/√3`, `k0 = 1`, `A = 16`.
pub fn default_rootorder() -> (Polynomial, f64, usize, f64) {
    (Polynomial::monomial(1.0, 3), 1.0 / 3f64.sqrt(), 1, 16.0)
}

/// `||H(f,g)||_{L^r(window)} / (||f||_{p1} ||g||_{p2})` over the `δ` ladder
/// against `1/(r(k0+1)) + 1 - 1/r`.
#[allow(clippy::too_many_arguments)]
pub fn rootorder_scaling_experiment(
    p: &Polynomial,
    t0: f64,
    k0: usize,
    a_big: f64,
    r: f64,
    p1: f64,
    p2: f64,
    delta_list: &[f64],
) -> Result<ExperimentReport> {
    check_holder(p1, p2, r)?;
    let ds = check_ladder(delta_list)?;
    let rows: Vec<Result<(f64, f64)>> = ds
        .par_iter()
        .map(|&delta| {
            let inst = build_counterexample_rootorder(p, t0, k0, delta, a_big)?;
            let vals: Vec<f64> = window_points(inst.window, WINDOW_SAMPLES).iter().map(|&x| h_at(&inst, x)).collect();
            let num = window_lr(inst.window, &vals, r);
            let den = inst.f.lp_norm(p1)? * inst.g.lp_norm(p2)?;
            Ok((delta, num / den))
        })
        .collect();
    let pts = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let mut report = scaling_report("rootorder", pts, rootorder_exponent(k0, r), SLOPE_TOLERANCE)?;
    report.pass = report.flags.iter().filter(|(k, _)| *k != "diverges").all(|(_, v)| *v);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_polynomial_has_no_linear_term() {
        for d in 2..=6 {
            let a = (d as f64).powf(1.0 / d as f64);
            let p = endpoint_polynomial(d, a);
            assert!(p.coeff(1).abs() < 1e-12);
            for t in [0.3, 1.1, 1.7] {
                let direct = t + ((1.0 - t) / a).powi(d as i32) - 1.0 / a.powi(d as i32);
                assert!((p.eval(t) - direct).abs() < 1e-13);
            }
        }
        let p = endpoint_polynomial(2, 2f64.sqrt());
        assert!((p.coeff(2) - 0.5).abs() < 1e-15 && p.degree() == 2);
    }

    #[test]
    fn endpoint_instance_examples() {
        let inst = build_counterexample_endpoint(2, 1e-3, 1 << 17).unwrap();
        let len = inst.window.1 - inst.window.0;
        assert!((len - 0.004472135954999579).abs() < 1e-12);
        assert!(certified_region_holds(&inst, 50));
        assert!(inst.rho_min.unwrap() >= 0.4);
        for d in [2, 3] {
            for delta in [1e-2, 1e-3] {
                assert!(build_counterexample_endpoint(d, delta, 1 << 17).is_ok());
            }
        }
        assert!(matches!(build_counterexample_endpoint(2, 1e-3, 1 << 12), Err(Error::ResolutionTooCoarse(_))));
    }

    #[test]
    fn exponent_arithmetic() {
        assert!(endpoint_exponent(2, 0.5).abs() < 1e-15);
        assert!((endpoint_exponent(2, 0.4) + 0.25).abs() < 1e-15);
        assert!(endpoint_exponent(3, 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn holder_checked() {
        let ds: Vec<f64> = (6..=10).map(|k| 2f64.powi(-k)).collect();
        assert_eq!(endpoint_scaling_experiment(2, 0.5, 2.0, 2.0, &ds).unwrap_err(), Error::HolderViolated);
        assert!(endpoint_scaling_experiment(2, 0.5, 1.0, 1.0, &ds[..3]).is_err());
    }

    #[test]
    fn endpoint_slope_small_ladder() {
        let ds: Vec<f64> = (6..=10).map(|k| 2f64.powi(-k)).collect();
        let r = endpoint_scaling_experiment_with(2, 0.4, 0.8, 0.8, &ds, 1 << 17).unwrap();
        assert!((r.fits["slope"] + 0.25).abs() < 0.05, "{}", r.fits["slope"]);
        assert!(r.flags["diverges"]);
    }

    #[test]
    fn rootorder_examples() {
        let (p, t0, k0, a) = default_rootorder();
        assert!(build_counterexample_rootorder(&p, t0, k0, 1e-4, a).is_ok());
        assert_eq!(build_counterexample_rootorder(&p, t0, k0, 1e-4, 5.0).unwrap_err(), Error::ATooSmall);
        // P' - 1 = 3(t-1)^2 forces a linear term
        let bad = Polynomial::new(&[4.0, -3.0, 1.0]);
        assert!(matches!(build_counterexample_rootorder(&bad, 1.0, 2, 1e-4, a), Err(Error::LinearTerm(_))));
        assert!(build_counterexample_rootorder(&p, t0, 2, 1e-4, a).is_err());
    }
}
