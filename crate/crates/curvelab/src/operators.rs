//! Quadrature evaluation of the single-scale pieces `T_j`, truncated sums of
//! them, the bilinear maximal function, level-set restrictions of `T_j`, and
//! the frequency multiplier `M_{m,n}`.
//!
//! `T_j(f,g)(x) = ∫ f(x-t) g(x-P(t)) ρ_j(t) dt` is computed in the rescaled
//! variable `t = 2^{-j} s`, where it reads `∫ f(x-2^{-j}s) g(x-P(2^{-j}s)) ρ(s) ds`
//! over `1/2 < |s| < 2`. Integrals are taken of the piecewise linear
//! interpolant of the integrand on a uniform node set in `s`, so that
//! integrals over sub-bands add up exactly to the full integral.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::oscillatory::oscillatory_integral;
use crate::polynomials::Polynomial;
use crate::signals::{CutoffFamily, GridFunction};

/// Node counts for the `s`-quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    /// Lower bound on nodes per component of `supp ρ`.
    pub min_nodes: usize,
    /// Nodes per grid step of the finer of the two input grids, measured in
    /// the original `t` variable.
    pub nodes_per_step: f64,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { min_nodes: 512, nodes_per_step: 2.0 }
    }
}

impl Quadrature {
    fn nodes(&self, t_len: f64, step: f64) -> usize {
        let m = (self.nodes_per_step * t_len / step).ceil();
        (m.min(1e8) as usize).max(self.min_nodes.max(512))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorResult {
    pub output: GridFunction,
    pub j_terms: Option<Vec<(i32, GridFunction)>>,
    pub quadrature_nodes_per_octave: usize,
    /// Set when `supp ρ_j` spans fewer than four grid steps.
    pub warning: bool,
}

/// A sub-band of `supp ρ` in the rescaled variable, as a union of intervals.
pub type Band = Vec<(f64, f64)>;

/// Both components of `supp ρ`.
pub fn full_band() -> Band {
    vec![(-2.0, -0.5), (0.5, 2.0)]
}

struct Setup<'a> {
    f: &'a GridFunction,
    g: &'a GridFunction,
    p: &'a Polynomial,
    scale: f64,
    nodes: usize,
    family: CutoffFamily,
}

impl Setup<'_> {
    /// Integrand sampled on the uniform nodes of one component.
    fn samples(&self, x: f64, sign: f64, buf: &mut Vec<f64>) {
        buf.clear();
        let ds = 1.5 / self.nodes as f64;
        for i in 0..=self.nodes {
            let s = sign * (0.5 + i as f64 * ds);
            let t = self.scale * s;
            let fv = self.f.eval(x - t);
            let v = if fv == 0.0 { 0.0 } else { fv * self.g.eval(x - self.p.eval(t)) * self.family.rho(s) };
            buf.push(v);
        }
    }

    /// Integral of the interpolated samples over `band`.
    fn integrate(&self, x: f64, band: &Band) -> f64 {
        let mut total = 0.0;
        let mut buf = Vec::with_capacity(self.nodes + 1);
        for (sign, comp) in [(-1.0, (-2.0, -0.5)), (1.0, (0.5, 2.0))] {
            let pieces: Vec<(f64, f64)> = band
                .iter()
                .filter_map(|&(a, b)| {
                    let lo = a.max(comp.0);
                    let hi = b.min(comp.1);
                    (hi > lo).then_some((lo, hi))
                })
                .collect();
            if pieces.is_empty() {
                continue;
            }
            self.samples(x, sign, &mut buf);
            for (lo, hi) in pieces {
                // work in |s| so that nodes increase
                let (u0, u1) = if sign > 0.0 { (lo, hi) } else { (-hi, -lo) };
                total += interp_integral(&buf, 0.5, 1.5 / self.nodes as f64, u0, u1);
            }
        }
        total
    }
}

/// `∫_{u0}^{u1}` of the linear interpolant of `v` on nodes `start + i*h`.
fn interp_integral(v: &[f64], start: f64, h: f64, u0: f64, u1: f64) -> f64 {
    let n = v.len() - 1;
    let pos = |u: f64| ((u - start) / h).clamp(0.0, n as f64);
    let (p0, p1) = (pos(u0), pos(u1));
    if p1 <= p0 {
        return 0.0;
    }
    let at = |p: f64| {
        let i = (p.floor() as usize).min(n - 1);
        let w = p - i as f64;
        v[i] * (1.0 - w) + v[i + 1] * w
    };
    let i0 = p0.floor() as usize;
    let i1 = (p1.ceil() as usize).min(n);
    let mut sum = 0.0;
    let mut prev_p = p0;
    let mut prev_v = at(p0);
    for k in (i0 + 1)..=i1 {
        let q = (k as f64).min(p1);
        if q <= prev_p {
            continue;
        }
        let qv = at(q);
        sum += 0.5 * (prev_v + qv) * (q - prev_p);
        prev_p = q;
        prev_v = qv;
    }
    sum * h
}

fn setup<'a>(
    f: &'a GridFunction,
    g: &'a GridFunction,
    p: &'a Polynomial,
    j: i32,
    family: &CutoffFamily,
    q: &Quadrature,
) -> Result<(Setup<'a>, bool)> {
    p.require_no_linear_term()?;
    let scale = 2f64.powi(-j);
    let step = f.step().min(g.step());
    let nodes = q.nodes(1.5 * scale, step);
    let warning = 1.5 * scale < 4.0 * f.step().max(g.step());
    Ok((Setup { f, g, p, scale, nodes, family: *family }, warning))
}

fn run_band(f: &GridFunction, s: &Setup, band: &Band) -> Result<GridFunction> {
    let values: Vec<f64> = (0..f.n).into_par_iter().map(|i| s.integrate(f.x(i), band)).collect();
    f.with_values(values)
}

/// `T_j(f, g)` on the grid of `f`.
pub fn apply_tj(f: &GridFunction, g: &GridFunction, p: &Polynomial, j: i32, family: &CutoffFamily) -> Result<OperatorResult> {
    apply_tj_with(f, g, p, j, family, &Quadrature::default())
}

pub fn apply_tj_with(
    f: &GridFunction,
    g: &GridFunction,
    p: &Polynomial,
    j: i32,
    family: &CutoffFamily,
    q: &Quadrature,
) -> Result<OperatorResult> {
    let (s, warning) = setup(f, g, p, j, family, q)?;
    let output = run_band(f, &s, &full_band())?;
    Ok(OperatorResult { output, j_terms: None, quadrature_nodes_per_octave: s.nodes, warning })
}

/// `T_j(f, g)` restricted to a band of the rescaled variable.
pub fn apply_tj_band(
    f: &GridFunction,
    g: &GridFunction,
    p: &Polynomial,
    j: i32,
    family: &CutoffFamily,
    q: &Quadrature,
    band: &Band,
) -> Result<OperatorResult> {
    let (s, warning) = setup(f, g, p, j, family, q)?;
    let output = run_band(f, &s, band)?;
    Ok(OperatorResult { output, j_terms: None, quadrature_nodes_per_octave: s.nodes, warning })
}

/// `Σ_{j=j_min}^{j_max} T_j(f, g)`, optionally keeping the per-scale terms.
pub fn apply_h_truncated(
    f: &GridFunction,
    g: &GridFunction,
    p: &Polynomial,
    j_min: i32,
    j_max: i32,
    family: &CutoffFamily,
    keep_terms: bool,
) -> Result<OperatorResult> {
    if j_min > j_max {
        return Err(invalid("apply_h_truncated: j_min > j_max"));
    }
    let terms: Vec<(i32, OperatorResult)> =
        (j_min..=j_max).map(|j| apply_tj(f, g, p, j, family).map(|r| (j, r))).collect::<Result<_>>()?;
    let mut sum = vec![0.0; f.n];
    let mut warning = false;
    let mut nodes = 0;
    for (_, r) in &terms {
        for (a, b) in sum.iter_mut().zip(&r.output.values) {
            *a += b;
        }
        warning |= r.warning;
        nodes = nodes.max(r.quadrature_nodes_per_octave);
    }
    Ok(OperatorResult {
        output: f.with_values(sum)?,
        j_terms: keep_terms.then(|| terms.into_iter().map(|(j, r)| (j, r.output)).collect()),
        quadrature_nodes_per_octave: nodes,
        warning,
    })
}

/// Dyadic ε grid with 8 points per octave over `[4 step, (hi - lo)/2]`.
pub fn default_epsilon_grid(f: &GridFunction) -> Vec<f64> {
    let lo = 4.0 * f.step();
    let hi = 0.5 * (f.hi - f.lo);
    if hi <= lo {
        return vec![hi];
    }
    let count = ((hi / lo).log2() * 8.0).floor() as usize;
    (0..=count).map(|k| lo * 2f64.powf(k as f64 / 8.0)).collect()
}

/// `sup_ε (2ε)^{-1} ∫_{-ε}^{ε} |f(x-t) g(x-P(t))| dt` over the given ε.
pub fn apply_m(f: &GridFunction, g: &GridFunction, p: &Polynomial, epsilon_grid: &[f64]) -> Result<GridFunction> {
    if epsilon_grid.is_empty() || epsilon_grid.iter().any(|&e| !(e > 0.0)) {
        return Err(invalid("apply_m: epsilon grid must be nonempty and positive"));
    }
    let step = f.step().min(g.step());
    let values: Vec<f64> = (0..f.n)
        .into_par_iter()
        .map(|i| {
            let x = f.x(i);
            let mut best = 0.0_f64;
            for &eps in epsilon_grid {
                let m = ((4.0 * eps / step).ceil() as usize).max(64);
                let dt = 2.0 * eps / m as f64;
                let mut s = 0.0;
                for k in 0..=m {
                    let t = -eps + k as f64 * dt;
                    let w = if k == 0 || k == m { 0.5 } else { 1.0 };
                    s += w * (f.eval(x - t) * g.eval(x - p.eval(t))).abs();
                }
                best = best.max(s * dt / (2.0 * eps));
            }
            best
        })
        .collect();
    f.with_values(values)
}

/// Subintervals of `[lo, hi]` where `pred(q(s))` holds, cut at the crossings
/// of `q` with each of `levels`.
pub fn poly_band<Q: Fn(f64) -> bool>(q: &Polynomial, levels: &[f64], pred: Q, lo: f64, hi: f64) -> Band {
    let mut cuts = vec![lo, hi];
    let tol = 1e-13 * (1.0 + q.max_abs_coeff());
    for &c in levels {
        let shifted = q.add_constant(-c);
        if shifted.degree() == 0 {
            continue;
        }
        if let Ok(roots) = shifted.real_roots_with_orders(lo, hi, tol) {
            cuts.extend(roots.into_iter().map(|r| r.0).filter(|r| *r > lo && *r < hi));
        }
    }
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup();
    let mut out: Band = Vec::new();
    for w in cuts.windows(2) {
        if !pred(q.eval(0.5 * (w[0] + w[1]))) {
            continue;
        }
        match out.last_mut() {
            Some(last) if last.1 == w[0] => last.1 = w[1],
            _ => out.push((w[0], w[1])),
        }
    }
    out
}

fn band_measure(b: &Band) -> f64 {
    b.iter().map(|(a, c)| c - a).sum()
}

/// `E_α = {s ∈ supp ρ : α <= |(P(2^{-j}s))'| <= 2α}` (derivative in `s`).
pub fn e_alpha(p: &Polynomial, j: i32, alpha: f64) -> Band {
    let scale = 2f64.powi(-j);
    let q = p.dilate(scale).derivative();
    let levels = [alpha, -alpha, 2.0 * alpha, -2.0 * alpha];
    let pred = |v: f64| v.abs() >= alpha && v.abs() <= 2.0 * alpha;
    let mut b = poly_band(&q, &levels, pred, -2.0, -0.5);
    b.extend(poly_band(&q, &levels, pred, 0.5, 2.0));
    b
}

/// `T_j^α(f, g)`: `T_j` restricted to `E_α`.
pub fn restricted_tj_alpha(
    f: &GridFunction,
    g: &GridFunction,
    p: &Polynomial,
    j: i32,
    alpha: f64,
    family: &CutoffFamily,
) -> Result<OperatorResult> {
    if !(alpha > 0.0) {
        return Err(invalid("alpha must be positive"));
    }
    apply_tj_band(f, g, p, j, family, &Quadrature::default(), &e_alpha(p, j, alpha))
}

/// `E_0(h)`: points of `E_0 = {1/2 < P'(2^{-j}s) < 2}` with
/// `h <= |P'(2^{-j}s) - 1| <= 2h`.
pub fn e_zero_h(p: &Polynomial, j: i32, h: f64) -> Band {
    let scale = 2f64.powi(-j);
    let q = p.derivative().dilate(scale);
    let levels = [0.5, 2.0, 1.0 - h, 1.0 + h, 1.0 - 2.0 * h, 1.0 + 2.0 * h];
    let pred = |v: f64| v > 0.5 && v < 2.0 && (v - 1.0).abs() >= h && (v - 1.0).abs() <= 2.0 * h;
    let mut b = poly_band(&q, &levels, pred, -2.0, -0.5);
    b.extend(poly_band(&q, &levels, pred, 0.5, 2.0));
    b
}

/// `E_0` itself.
pub fn e_zero(p: &Polynomial, j: i32) -> Band {
    let scale = 2f64.powi(-j);
    let q = p.derivative().dilate(scale);
    let pred = |v: f64| v > 0.5 && v < 2.0;
    let mut b = poly_band(&q, &[0.5, 2.0], pred, -2.0, -0.5);
    b.extend(poly_band(&q, &[0.5, 2.0], pred, 0.5, 2.0));
    b
}

/// `T_{j,h}(f, g)` together with `|E_0(h)|`.
pub fn restricted_tjh(
    f: &GridFunction,
    g: &GridFunction,
    p: &Polynomial,
    j: i32,
    h: f64,
    family: &CutoffFamily,
) -> Result<(OperatorResult, f64)> {
    if !(h > 0.0 && h <= 1.0) {
        return Err(invalid("h must lie in (0, 1]"));
    }
    let band = e_zero_h(p, j, h);
    let measure = band_measure(&band);
    Ok((apply_tj_band(f, g, p, j, family, &Quadrature::default(), &band)?, measure))
}

pub fn band_length(b: &Band) -> f64 {
    band_measure(b)
}

/// Ingredients of `M_{m,n}` that do not depend on `(ξ, η)`.
#[derive(Debug, Clone)]
pub struct MultiplierSetup {
    pub l: usize,
    pub j: i32,
    pub j_l: f64,
    pub sign_l: f64,
    /// `Q_l(t) = 2^{j_l + l j} P_l(2^{-j_l - j} t)`.
    pub q_l: Polynomial,
}

impl MultiplierSetup {
    pub fn new(p: &Polynomial, l: usize, j: i32) -> Result<Self> {
        if l < 2 || l > p.degree() {
            return Err(invalid(format!("l = {l} outside [2, {}]", p.degree())));
        }
        let a_l = p.coeff(l);
        if a_l == 0.0 {
            return Err(invalid(format!("a_{l} vanishes")));
        }
        let j_l = a_l.abs().log2() / (l as f64 - 1.0);
        let p_l = p.truncate_term(l)?;
        let q_l = p_l.dilate(2f64.powf(-j_l - j as f64)).scale(2f64.powf(j_l + (l as i32 * j) as f64));
        Ok(Self { l, j, j_l, sign_l: a_l.signum(), q_l })
    }

    /// `t ξ 2^{-(j_l+j)} + (±t^l + Q_l(t)) η 2^{-(j_l+lj)}`.
    pub fn phase(&self, xi: f64, eta: f64) -> impl Fn(f64) -> f64 + '_ {
        let a = xi * 2f64.powf(-(self.j_l + self.j as f64));
        let b = eta * 2f64.powf(-(self.j_l + (self.l as i32 * self.j) as f64));
        move |t: f64| t * a + (self.sign_l * t.powi(self.l as i32) + self.q_l.eval(t)) * b
    }
}

/// The multiplier `M_{m,n}(ξ, η)`.
#[allow(clippy::too_many_arguments)]
pub fn multiplier_mmn(p: &Polynomial, l: usize, j: i32, m: i32, n: i32, xi: f64, eta: f64, family: &CutoffFamily) -> Result<Complex64> {
    let setup = MultiplierSetup::new(p, l, j)?;
    multiplier_with(&setup, m, n, xi, eta, family)
}

pub fn multiplier_with(s: &MultiplierSetup, m: i32, n: i32, xi: f64, eta: f64, family: &CutoffFamily) -> Result<Complex64> {
    let cut_x = family.phi_hat(xi / 2f64.powf(s.j_l + (s.j + m) as f64));
    let cut_y = family.phi_hat(eta / 2f64.powf(s.j_l + (s.l as i32 * s.j + n) as f64));
    if cut_x == 0.0 || cut_y == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let phase = s.phase(xi, eta);
    let amp = |t: f64| family.rho(t);
    let two_pi = 2.0 * std::f64::consts::PI;
    let neg = oscillatory_integral(&phase, &amp, -two_pi, (-2.0, -0.5))?;
    let pos = oscillatory_integral(&phase, &amp, -two_pi, (0.5, 2.0))?;
    Ok((neg + pos) * cut_x * cut_y)
}

/// `||T||_r / (||f||_{p1} ||g||_{p2})`.
pub fn operator_ratio(tfg: &GridFunction, f: &GridFunction, g: &GridFunction, p1: f64, p2: f64, r: f64) -> Result<f64> {
    let den = f.lp_norm(p1)? * g.lp_norm(p2)?;
    if den == 0.0 {
        return Err(Error::InvalidArgument("operator_ratio: zero denominator".into()));
    }
    Ok(tfg.lp_norm(r)? / den)
}
