//! Oscillatory integrals, van der Corput sublevel checks, stationary phases,
//! `D_K` norms, inverse functions and their derivatives, and the bilinear
//! oscillatory decay experiment.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::operators::MultiplierSetup;
use crate::polynomials::{fit_decay_exponent, level_set_measure, Polynomial};
use crate::report::ExperimentReport;
use crate::signals::{CutoffFamily, GridFunction};

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscOptions {
    pub nodes_per_period: f64,
    pub rel_tol: f64,
    pub node_budget: usize,
}

impl Default for OscOptions {
    fn default() -> Self {
        Self { nodes_per_period: 20.0, rel_tol: 1e-8, node_budget: 1 << 24 }
    }
}

fn composite(phase: &(dyn Fn(f64) -> f64 + Sync), amp: &(dyn Fn(f64) -> f64 + Sync), lambda: f64, a: f64, b: f64, panels: usize) -> Complex64 {
    let (x, w) = gl16();
    let h = (b - a) / panels as f64;
    let panel = |p: usize| {
        let mid = a + (p as f64 + 0.5) * h;
        let mut s = Complex64::new(0.0, 0.0);
        for (xi, wi) in x.iter().zip(w) {
            let t = mid + 0.5 * h * xi;
            let av = amp(t);
            if av != 0.0 {
                s += Complex64::from_polar(wi * av, lambda * phase(t));
            }
        }
        s * (0.5 * h)
    };
    if panels >= 4096 {
        (0..panels).into_par_iter().map(panel).reduce(|| Complex64::new(0.0, 0.0), |x, y| x + y)
    } else {
        (0..panels).map(panel).sum()
    }
}

/// `∫_a^b exp(i λ phase(t)) amplitude(t) dt`.
///
/// Composite 16-point Gauss–Legendre with at least 20 nodes per oscillation
/// period (period from `λ sup|phase'|`), doubled until two successive panel
/// counts agree to relative `1e-8` or to the rounding floor of `λ·phase`.
pub fn oscillatory_integral(
    phase: &(dyn Fn(f64) -> f64 + Sync),
    amplitude: &(dyn Fn(f64) -> f64 + Sync),
    lambda: f64,
    interval: (f64, f64),
) -> Result<Complex64> {
    oscillatory_integral_with(phase, amplitude, lambda, interval, &OscOptions::default())
}

pub fn oscillatory_integral_with(
    phase: &(dyn Fn(f64) -> f64 + Sync),
    amplitude: &(dyn Fn(f64) -> f64 + Sync),
    lambda: f64,
    interval: (f64, f64),
    opt: &OscOptions,
) -> Result<Complex64> {
    let (a, b) = interval;
    if !(b > a) {
        return Err(invalid("oscillatory_integral: empty interval"));
    }
    let samples = 4096;
    let dt = (b - a) / samples as f64;
    let mut slope = 0.0_f64;
    let mut abs_amp = 0.0;
    let mut prev = phase(a);
    let mut phase_sup = prev.abs();
    for i in 1..=samples {
        let t = a + i as f64 * dt;
        let v = phase(t);
        slope = slope.max(((v - prev) / dt).abs());
        phase_sup = phase_sup.max(v.abs());
        prev = v;
        abs_amp += amplitude(t - 0.5 * dt).abs() * dt;
    }
    let periods = lambda.abs() * slope * (b - a) / (2.0 * PI);
    let needed = (opt.nodes_per_period * periods).ceil() as usize;
    let mut panels = needed.div_ceil(16).max(4);
    let mut prev_val = composite(phase, amplitude, lambda, a, b, panels);
    loop {
        let next = 2 * panels;
        if next * 16 > opt.node_budget {
            return Err(Error::NodeBudget { required: next * 16, budget: opt.node_budget });
        }
        let val = composite(phase, amplitude, lambda, a, b, next);
        let diff = (val - prev_val).norm();
        // rounding in λ·phase bounds the attainable absolute accuracy
        let floor = 64.0 * f64::EPSILON * (1.0 + lambda.abs() * phase_sup) * abs_amp;
        if diff <= opt.rel_tol * val.norm() || diff <= floor {
            return Ok(val);
        }
        prev_val = val;
        panels = next;
    }
}

/// Chebyshev series `Σ c_k T_k` on `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chebyshev {
    pub a: f64,
    pub b: f64,
    pub coeffs: Vec<f64>,
}

impl Chebyshev {
    /// Interpolant at the `degree + 1` Chebyshev–Lobatto points.
    pub fn fit<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, degree: usize) -> Self {
        let n = degree.max(1);
        let vals: Vec<f64> = (0..=n).map(|k| f(Self::map_to(a, b, (PI * k as f64 / n as f64).cos()))).collect();
        Self::from_lobatto_values(&vals, a, b)
    }

    fn from_lobatto_values(vals: &[f64], a: f64, b: f64) -> Self {
        let n = vals.len() - 1;
        // cosine table indexed by (j k) mod 2n
        let table: Vec<f64> = (0..2 * n).map(|m| (PI * m as f64 / n as f64).cos()).collect();
        let mut coeffs = vec![0.0; n + 1];
        for (j, c) in coeffs.iter_mut().enumerate() {
            let mut s = 0.0;
            for (k, v) in vals.iter().enumerate() {
                let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                s += w * v * table[(j * k) % (2 * n)];
            }
            *c = s * 2.0 / n as f64;
        }
        coeffs[0] *= 0.5;
        coeffs[n] *= 0.5;
        Self { a, b, coeffs }
    }

    fn map_to(a: f64, b: f64, x: f64) -> f64 {
        0.5 * (a + b) + 0.5 * (b - a) * x
    }

    pub fn eval(&self, t: f64) -> f64 {
        let x = (2.0 * t - self.a - self.b) / (self.b - self.a);
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = 2.0 * x * b1 - b2 + c;
            b2 = b1;
            b1 = b0;
        }
        x * b1 - b2 + self.coeffs[0]
    }

    pub fn derivative(&self) -> Self {
        let n = self.coeffs.len() - 1;
        if n == 0 {
            return Self { a: self.a, b: self.b, coeffs: vec![0.0] };
        }
        let mut d = vec![0.0; n + 1];
        for k in (1..=n).rev() {
            d[k - 1] = d.get(k + 1).copied().unwrap_or(0.0) + 2.0 * k as f64 * self.coeffs[k];
        }
        d[0] *= 0.5;
        d.truncate(n);
        let s = 2.0 / (self.b - self.a);
        Self { a: self.a, b: self.b, coeffs: d.into_iter().map(|c| c * s).collect() }
    }

    fn scale(&self) -> f64 {
        self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    /// Largest coefficient in the top tenth of the series.
    pub fn tail(&self) -> f64 {
        let n = self.coeffs.len();
        self.coeffs[n - (n / 10).max(1)..].iter().fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    /// Drops trailing coefficients below `rel * max(1, max|c_k|)`.
    pub fn chop(&mut self, rel: f64) {
        let cut = rel * self.scale().max(1.0);
        while self.coeffs.len() > 1 && self.coeffs[self.coeffs.len() - 1].abs() < cut {
            self.coeffs.pop();
        }
    }
}

/// Interpolant of degree 256, 512 or 1024, whichever first has a coefficient
/// tail below `1e-10 max(1, max|c_k|)`; chopped at roundoff level.
pub fn converged_chebyshev<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<Chebyshev> {
    for degree in [256, 512, 1024] {
        let mut c = Chebyshev::fit(&f, a, b, degree);
        if c.tail() <= 1e-10 * c.scale().max(1.0) {
            c.chop(1e-15);
            return Ok(c);
        }
    }
    Err(Error::NotSmooth)
}

type Fun = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type DerivFun = Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>;

/// Smooth function on an interval, with optional analytic derivatives.
#[derive(Clone)]
pub struct SmoothFn {
    f: Fun,
    derivs: Option<DerivFun>,
    pub domain: (f64, f64),
    cheb: Arc<OnceLock<Result<Vec<Chebyshev>>>>,
}

impl std::fmt::Debug for SmoothFn {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.debug_struct("SmoothFn").field("domain", &self.domain).field("analytic", &self.derivs.is_some()).finish()
    }
}

/// Derivative orders kept in the cached Chebyshev tower.
const CHEB_ORDERS: usize = 12;

impl SmoothFn {
    pub fn new<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F, domain: (f64, f64)) -> Self {
        Self { f: Arc::new(f), derivs: None, domain, cheb: Arc::new(OnceLock::new()) }
    }

    /// `derivs(t, k)` must return the `k`-th derivative (`k = 0` the value).
    pub fn with_derivatives<F, D>(f: F, derivs: D, domain: (f64, f64)) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64, usize) -> f64 + Send + Sync + 'static,
    {
        Self { f: Arc::new(f), derivs: Some(Arc::new(derivs)), domain, cheb: Arc::new(OnceLock::new()) }
    }

    pub fn from_polynomial(p: &Polynomial, domain: (f64, f64)) -> Self {
        let derivs: Vec<Polynomial> = (0..=p.degree() + 1).map(|k| p.nth_derivative(k)).collect();
        let q = p.clone();
        Self::with_derivatives(
            move |t| q.eval(t),
            move |t, k| derivs.get(k).map_or(0.0, |d| d.eval(t)),
            domain,
        )
    }

    pub fn has_analytic_derivatives(&self) -> bool {
        self.derivs.is_some()
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    fn tower(&self) -> Result<&Vec<Chebyshev>> {
        self.cheb
            .get_or_init(|| {
                let (a, b) = self.domain;
                let f = self.f.clone();
                let base = converged_chebyshev(move |t| f(t), a, b)?;
                let mut v = vec![base];
                for _ in 0..CHEB_ORDERS {
                    let next = v[v.len() - 1].derivative();
                    v.push(next);
                }
                Ok(v)
            })
            .as_ref()
            .map_err(|e| e.clone())
    }

    /// `k`-th derivative at `t`: analytic when supplied, otherwise from the
    /// Chebyshev interpolant on the domain.
    pub fn deriv(&self, t: f64, k: usize) -> Result<f64> {
        if let Some(d) = &self.derivs {
            return Ok(d(t, k));
        }
        if k == 0 {
            return Ok(self.eval(t));
        }
        let tower = self.tower()?;
        tower.get(k).map(|c| c.eval(t)).ok_or_else(|| invalid(format!("derivative order {k} above {CHEB_ORDERS}")))
    }

    /// `a - b`, keeping analytic derivatives when both have them.
    pub fn sub(a: &SmoothFn, b: &SmoothFn) -> SmoothFn {
        let (fa, fb) = (a.f.clone(), b.f.clone());
        let f = move |t: f64| fa(t) - fb(t);
        match (&a.derivs, &b.derivs) {
            (Some(da), Some(db)) => {
                let (da, db) = (da.clone(), db.clone());
                SmoothFn::with_derivatives(f, move |t, k| da(t, k) - db(t, k), a.domain)
            }
            _ => SmoothFn::new(f, a.domain),
        }
    }
}

/// `max_{k <= K} sup |D^k F|` over 4096 samples of `interval`, derivatives
/// from the Chebyshev interpolant.
pub fn dk_norm(f: &SmoothFn, k_max: usize, interval: (f64, f64)) -> Result<f64> {
    if k_max > CHEB_ORDERS {
        return Err(invalid(format!("K above {CHEB_ORDERS}")));
    }
    let (a, b) = interval;
    let g = f.f.clone();
    let mut c = converged_chebyshev(move |t| g(t), a, b)?;
    let samples = 4096;
    let mut best = 0.0_f64;
    for _k in 0..=k_max {
        for i in 0..=samples {
            let t = a + (b - a) * i as f64 / samples as f64;
            best = best.max(c.eval(t).abs());
        }
        c = c.derivative();
    }
    Ok(best)
}

fn check_monotone(f: &SmoothFn, interval: (f64, f64)) -> Result<f64> {
    let (a, b) = interval;
    let n = 1024;
    let vals: Vec<f64> = (0..=n).map(|i| f.eval(a + (b - a) * i as f64 / n as f64)).collect();
    let dir = (vals[n] - vals[0]).signum();
    if dir == 0.0 || vals.windows(2).any(|w| (w[1] - w[0]) * dir <= 0.0) {
        return Err(invalid("function is not strictly monotone on the interval"));
    }
    Ok(dir)
}

/// `t` in `interval` with `F(t) = a`, by bisection then Newton.
pub fn inverse_function(f: &SmoothFn, a: f64, interval: (f64, f64)) -> Result<f64> {
    let dir = check_monotone(f, interval)?;
    let (mut lo, mut hi) = interval;
    let (flo, fhi) = (f.eval(lo), f.eval(hi));
    let (vmin, vmax) = if dir > 0.0 { (flo, fhi) } else { (fhi, flo) };
    if !(a >= vmin && a <= vmax) {
        return Err(Error::OutOfRange);
    }
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if m <= lo || m >= hi {
            break;
        }
        if (f.eval(m) - a) * dir < 0.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..3 {
        let r = f.eval(t) - a;
        if r == 0.0 {
            break;
        }
        let d = match f.deriv(t, 1) {
            Ok(d) if d != 0.0 => d,
            _ => break,
        };
        let nt = t - r / d;
        if !(nt >= interval.0 && nt <= interval.1) || (f.eval(nt) - a).abs() >= r.abs() {
            break;
        }
        t = nt;
    }
    Ok(t)
}

/// Derivatives `d^n x / dy^n`, `n = 1..=n_max`, of the inverse of `F` at
/// `F(x0)` from the Taylor coefficients `taylor[k] = F^{(k)}(x0) / k!`,
/// by Lagrange inversion.
pub fn inverse_derivatives_from_taylor(taylor: &[f64], n_max: usize) -> Result<Vec<f64>> {
    if taylor.len() < n_max + 1 {
        return Err(invalid("need Taylor coefficients up to order n_max"));
    }
    let a1 = taylor[1];
    if a1 == 0.0 || !a1.is_finite() {
        return Err(Error::CriticalPoint);
    }
    // S(h) = (F(x0+h) - F(x0)) / h = a1 + a2 h + ...
    let s: Vec<f64> = (0..n_max).map(|k| taylor[k + 1]).collect();
    // R = 1/S as a power series
    let mut r = vec![0.0; n_max];
    r[0] = 1.0 / a1;
    for k in 1..n_max {
        let acc: f64 = (1..=k).map(|i| s[i] * r[k - i]).sum();
        r[k] = -acc / a1;
    }
    let mut out = Vec::with_capacity(n_max);
    let mut pow = vec![0.0; n_max];
    pow[0] = 1.0;
    let mut factorial = 1.0;
    for n in 1..=n_max {
        // pow = R^n
        let mut next = vec![0.0; n_max];
        for i in 0..n_max {
            for j in 0..n_max - i {
                next[i + j] += pow[i] * r[j];
            }
        }
        pow = next;
        factorial *= n as f64;
        let b_n = pow[n - 1] / n as f64;
        out.push(b_n * factorial);
    }
    Ok(out)
}

/// Same as [`inverse_derivatives_from_taylor`] with the Taylor coefficients
/// taken from `F`'s derivatives.
pub fn inverse_derivatives(f: &SmoothFn, x0: f64, n_max: usize) -> Result<Vec<f64>> {
    let mut taylor = Vec::with_capacity(n_max + 1);
    let mut fact = 1.0;
    for k in 0..=n_max {
        if k > 0 {
            fact *= k as f64;
        }
        taylor.push(f.deriv(x0, k)? / fact);
    }
    inverse_derivatives_from_taylor(&taylor, n_max)
}

/// Desk-scale stand-ins for the implied constants of the pair conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairConstants {
    /// Lower bound for `inf |F_i'|` in (i).
    pub floor: f64,
    /// Upper bound for `||F_i||_{D_K}` in (ii).
    pub ceiling: f64,
}

impl Default for PairConstants {
    fn default() -> Self {
        Self { floor: 0.25, ceiling: 64.0 }
    }
}

#[derive(Debug, Clone)]
pub struct PhasePair {
    pub f0: SmoothFn,
    pub f1: SmoothFn,
    pub k: usize,
    pub n: f64,
    pub interval: (f64, f64),
    pub constants: PairConstants,
}

pub const DEFAULT_PAIR_K: usize = 6;
pub const DEFAULT_PAIR_N: f64 = 30.0;

fn sup_abs_deriv(f: &SmoothFn, k: usize, interval: (f64, f64), samples: usize, inf: bool) -> Result<f64> {
    let (a, b) = interval;
    let mut acc = if inf { f64::INFINITY } else { 0.0 };
    for i in 0..=samples {
        let v = f.deriv(a + (b - a) * i as f64 / samples as f64, k)?.abs();
        acc = if inf { acc.min(v) } else { acc.max(v) };
    }
    Ok(acc)
}

fn dk_norm_any(f: &SmoothFn, k_max: usize, interval: (f64, f64)) -> Result<f64> {
    if f.has_analytic_derivatives() {
        let mut best = 0.0_f64;
        for k in 0..=k_max {
            best = best.max(sup_abs_deriv(f, k, interval, 4096, false)?);
        }
        Ok(best)
    } else {
        dk_norm(f, k_max, interval)
    }
}

/// Checks the pair conditions and measures `||F_0^{-1} - F_1^{-1}||_{D_{K-1}}`
/// at the sample points of the common range.
pub fn perturbation_pair_check(pair: &PhasePair, sample_points: &[f64]) -> Result<ExperimentReport> {
    let iv = pair.interval;
    let mut failed = Vec::new();
    let floor0 = sup_abs_deriv(&pair.f0, 1, iv, 4096, true)?;
    let floor1 = sup_abs_deriv(&pair.f1, 1, iv, 4096, true)?;
    if floor0 < pair.constants.floor || floor1 < pair.constants.floor {
        failed.push("(i)");
    }
    let n0 = dk_norm_any(&pair.f0, pair.k, iv)?;
    let n1 = dk_norm_any(&pair.f1, pair.k, iv)?;
    if n0 > pair.constants.ceiling || n1 > pair.constants.ceiling {
        failed.push("(ii)");
    }
    let diff = dk_norm_any(&SmoothFn::sub(&pair.f0, &pair.f1), pair.k, iv)?;
    if diff > 2f64.powf(-pair.n) {
        failed.push("(iii)");
    }
    if !failed.is_empty() {
        return Err(Error::PairConditions(failed.join(", ")));
    }
    let range = |f: &SmoothFn| {
        let (x, y) = (f.eval(iv.0), f.eval(iv.1));
        (x.min(y), x.max(y))
    };
    let (r0, r1) = (range(&pair.f0), range(&pair.f1));
    let common = (r0.0.max(r1.0), r0.1.min(r1.1));
    if sample_points.is_empty() {
        return Err(Error::Empty("sample points".into()));
    }
    if sample_points.iter().any(|&a| !(a >= common.0 && a <= common.1)) {
        return Err(invalid("sample point outside the common range"));
    }
    let order = pair.k - 1;
    let rows: Vec<Result<(f64, f64, f64, f64)>> = sample_points
        .par_iter()
        .map(|&a| {
            let t0 = inverse_function(&pair.f0, a, iv)?;
            let t1 = inverse_function(&pair.f1, a, iv)?;
            let mut worst = (t0 - t1).abs();
            if order >= 1 {
                let d0 = inverse_derivatives(&pair.f0, t0, order)?;
                let d1 = inverse_derivatives(&pair.f1, t1, order)?;
                for (x, y) in d0.iter().zip(&d1) {
                    worst = worst.max((x - y).abs());
                }
            }
            Ok((a, t0, t1, worst))
        })
        .collect();
    let mut report = ExperimentReport::new("pairs", &["a", "t0", "t1", "dist"]);
    let mut norm = 0.0_f64;
    for r in rows {
        let (a, t0, t1, w) = r?;
        norm = norm.max(w);
        report.push_row(vec![a.into(), t0.into(), t1.into(), w.into()]);
    }
    let bound = 2f64.powf(-pair.n / 3.0);
    report.fit("norm", norm);
    report.fit("bound", bound);
    report.fit("dk_distance", diff);
    report.flag("pass", norm <= bound, true);
    Ok(report)
}

/// `g^{(n)}(x)` by the central `n`-th difference with step `h`,
/// Richardson-extrapolated over `h, h/2, ..., h/2^{levels-1}`.
pub fn finite_difference_derivative<G: Fn(f64) -> f64>(g: G, x: f64, n: usize, h: f64, levels: usize) -> f64 {
    let central = |h: f64| {
        let mut binom = 1.0;
        let mut acc = 0.0;
        for i in 0..=n {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * binom * g(x + (n as f64 / 2.0 - i as f64) * h);
            binom = binom * (n - i) as f64 / (i + 1) as f64;
        }
        acc / h.powi(n as i32)
    };
    let mut table: Vec<f64> = (0..levels.max(1)).map(|k| central(h / 2f64.powi(k as i32))).collect();
    for col in 1..table.len() {
        let f = 4f64.powi(col as i32);
        for k in (col..table.len()).rev() {
            table[k] = (f * table[k] - table[k - 1]) / (f - 1.0);
        }
    }
    table[table.len() - 1]
}

/// Random `(6, 30)`-pair on `(1/2, 2)`: a quadratic `F0` with `F0' >= 1`
/// and `F1 = F0 + ε cos(ωt + φ)` with `ε max(1, ω^6) <= 2^{-31}`.
pub fn constructed_pair<R: Rng>(rng: &mut R) -> PhasePair {
    let z = rng.gen_range(-1.0..1.0);
    let b = rng.gen_range(1.0..3.0);
    let c = rng.gen_range(0.0..0.3);
    let w: f64 = rng.gen_range(0.5..2.0);
    let phi = rng.gen_range(0.0..2.0 * PI);
    let eps = rng.gen_range(0.1..1.0) * 2f64.powi(-31) / w.powi(DEFAULT_PAIR_K as i32).max(1.0);
    let interval = (0.5, 2.0);
    let f0 = SmoothFn::from_polynomial(&Polynomial::from_full(&[z, b, c]), interval);
    let f1 = SmoothFn::with_derivatives(
        move |t: f64| z + b * t + c * t * t + eps * (w * t + phi).cos(),
        move |t: f64, k| {
            let base = match k {
                0 => z + b * t + c * t * t,
                1 => b + 2.0 * c * t,
                2 => 2.0 * c,
                _ => 0.0,
            };
            base + eps * w.powi(k as i32) * (w * t + phi + k as f64 * PI / 2.0).cos()
        },
        interval,
    );
    PhasePair { f0, f1, k: DEFAULT_PAIR_K, n: DEFAULT_PAIR_N, interval, constants: PairConstants::default() }
}

/// `count` equispaced points strictly inside the common range of a pair.
pub fn pair_sample_points(pair: &PhasePair, count: usize) -> Vec<f64> {
    let (a, b) = pair.interval;
    let range = |f: &SmoothFn| {
        let (x, y) = (f.eval(a), f.eval(b));
        (x.min(y), x.max(y))
    };
    let (r0, r1) = (range(&pair.f0), range(&pair.f1));
    let (lo, hi) = (r0.0.max(r1.0), r0.1.min(r1.1));
    let pad = 1e-3 * (hi - lo);
    (0..count).map(|i| lo + pad + (hi - lo - 2.0 * pad) * (i as f64 + 0.5) / count as f64).collect()
}

/// Empirical `C_k` in `|{|u| <= α}| <= C_k α^{1/k}` under `|u^{(k)}| >= 1`.
pub fn sublevel_check(u: &SmoothFn, k: usize, alpha_list: &[f64], interval: (f64, f64)) -> Result<ExperimentReport> {
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    let floor = sup_abs_deriv(u, k, interval, 2048, true)?;
    if floor < 1.0 {
        return Err(Error::DerivativeFloor(format!("min |u^({k})| = {floor}")));
    }
    let mut report = ExperimentReport::new("vdc", &["alpha", "measure", "ratio"]);
    let mut worst = 0.0_f64;
    let mut prev = 0.0;
    let mut monotone = true;
    let mut sorted = alpha_list.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    for &alpha in &sorted {
        // `|u| <= α` and `|u| < α` differ on a null set
        let m = level_set_measure(|t| u.eval(t), alpha, interval.0, interval.1, 1 << 14)?;
        let ratio = m / alpha.powf(1.0 / k as f64);
        monotone &= m + 1e-12 >= prev;
        prev = m;
        worst = worst.max(ratio);
        report.push_row(vec![alpha.into(), m.into(), ratio.into()]);
    }
    report.fit("C_k", worst);
    report.flag("monotone", monotone, true);
    Ok(report)
}

/// Stationary point `t0` and phase `φ_l(ξ, η) = 2π(t0 ξ/η + ±t0^l + Q_l(t0)) η`.
pub fn phase_phi(p: &Polynomial, l: usize, j: i32, xi: f64, eta: f64) -> Result<(f64, f64)> {
    let setup = MultiplierSetup::new(p, l, j)?;
    let mut roots = Vec::new();
    for iv in [(-2.0, -0.5), (0.5, 2.0)] {
        match stationary_points(&setup, xi, eta, iv) {
            Ok(r) => roots.extend(r),
            Err(Error::NoStationaryPoint) => {}
            Err(e) => return Err(e),
        }
    }
    finish_phase(&setup, xi, eta, roots)
}

/// As [`phase_phi`] with the search confined to one interval.
pub fn phase_phi_on(p: &Polynomial, l: usize, j: i32, xi: f64, eta: f64, interval: (f64, f64)) -> Result<(f64, f64)> {
    let setup = MultiplierSetup::new(p, l, j)?;
    let roots = stationary_points(&setup, xi, eta, interval)?;
    finish_phase(&setup, xi, eta, roots)
}

fn finish_phase(setup: &MultiplierSetup, xi: f64, eta: f64, roots: Vec<f64>) -> Result<(f64, f64)> {
    match roots.len() {
        0 => Err(Error::NoStationaryPoint),
        1 => {
            let t0 = roots[0];
            let g = xi / eta * t0 + setup.sign_l * t0.powi(setup.l as i32) + setup.q_l.eval(t0);
            Ok((t0, 2.0 * PI * g * eta))
        }
        _ => Err(Error::NonUnique(roots)),
    }
}

fn stationary_points(setup: &MultiplierSetup, xi: f64, eta: f64, iv: (f64, f64)) -> Result<Vec<f64>> {
    if eta == 0.0 {
        return Err(invalid("eta must be nonzero"));
    }
    // g'(t) = ξ/η + ±l t^{l-1} + Q_l'(t)
    let l = setup.l;
    let dg = setup
        .q_l
        .derivative()
        .add_constant(xi / eta)
        .scale(1.0)
        .coeffs()
        .to_vec();
    let mut c = dg;
    if c.len() < l {
        c.resize(l, 0.0);
    }
    c[l - 1] += setup.sign_l * l as f64;
    let dg = Polynomial::from_full(&c);
    let n = 1024;
    let (a, b) = iv;
    let mut roots = Vec::new();
    let mut prev_t = a;
    let mut prev_v = dg.eval(a);
    for i in 1..=n {
        let t = a + (b - a) * i as f64 / n as f64;
        let v = dg.eval(t);
        if prev_v == 0.0 {
            roots.push(prev_t);
        } else if prev_v * v < 0.0 {
            roots.push(polish(&dg, prev_t, t, prev_v));
        }
        prev_t = t;
        prev_v = v;
    }
    if prev_v == 0.0 {
        roots.push(b);
    }
    if roots.is_empty() {
        return Err(Error::NoStationaryPoint);
    }
    Ok(roots)
}

fn polish(p: &Polynomial, mut a: f64, mut b: f64, fa: f64) -> f64 {
    let sa = fa.signum();
    while b - a > 1e-12 {
        let m = 0.5 * (a + b);
        if p.eval(m).signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    let mut t = 0.5 * (a + b);
    for _ in 0..3 {
        let (v, d) = p.eval_with_derivative(t);
        if d == 0.0 {
            break;
        }
        let nt = t - v / d;
        if (nt - t).abs() > 1e-10 {
            break;
        }
        t = nt;
    }
    t
}

/// `c_l` of the unperturbed closed form `φ*_l = c_l |ξ|^{l/(l-1)} / |η|^{1/(l-1)}`,
/// calibrated at one `(ξ, η)` on the positive component of `supp ρ`.
pub fn calibrate_c_l(l: usize, xi: f64, eta: f64) -> Result<f64> {
    let p = Polynomial::monomial(1.0, l);
    let (_, phi) = phase_phi_on(&p, l, 0, xi, eta, (0.5, 2.0))?;
    Ok(phi / closed_form_base(l, xi, eta))
}

pub fn closed_form_base(l: usize, xi: f64, eta: f64) -> f64 {
    let e = 1.0 / (l as f64 - 1.0);
    xi.abs().powf(l as f64 * e) / eta.abs().powf(e)
}

/// Box `[u0,u1] x [v0,v1]` sampled on an `n x n` grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box2 {
    pub u: (f64, f64),
    pub v: (f64, f64),
    pub n: usize,
}

/// Tensor Chebyshev interpolant used for mixed partial derivatives.
struct Cheb2 {
    u: (f64, f64),
    v: (f64, f64),
    /// coeffs[i][j] multiplies T_i(u) T_j(v)
    coeffs: Vec<Vec<f64>>,
}

impl Cheb2 {
    fn fit<F: Fn(f64, f64) -> f64 + Sync>(f: F, u: (f64, f64), v: (f64, f64), deg: usize) -> Self {
        let pts = |r: (f64, f64)| -> Vec<f64> { (0..=deg).map(|k| Chebyshev::map_to(r.0, r.1, (PI * k as f64 / deg as f64).cos())).collect() };
        let (us, vs) = (pts(u), pts(v));
        let vals: Vec<Vec<f64>> = us.par_iter().map(|&a| vs.iter().map(|&b| f(a, b)).collect()).collect();
        // transform along v for each u-node, then along u
        let along_v: Vec<Vec<f64>> = vals.iter().map(|row| Chebyshev::from_lobatto_values(row, v.0, v.1).coeffs).collect();
        let mut coeffs = vec![vec![0.0; deg + 1]; deg + 1];
        for j in 0..=deg {
            let col: Vec<f64> = along_v.iter().map(|r| r[j]).collect();
            let cu = Chebyshev::from_lobatto_values(&col, u.0, u.1).coeffs;
            for i in 0..=deg {
                coeffs[i][j] = cu[i];
            }
        }
        Self { u, v, coeffs }
    }

    fn mixed(&self, du: usize, dv: usize) -> Self {
        let deg = self.coeffs.len();
        let mut c = self.coeffs.clone();
        for _ in 0..du {
            let mut out = vec![vec![0.0; deg]; deg];
            for j in 0..deg {
                let col: Vec<f64> = c.iter().map(|r| r[j]).collect();
                let d = Chebyshev { a: self.u.0, b: self.u.1, coeffs: col }.derivative().coeffs;
                for (i, x) in d.into_iter().enumerate() {
                    out[i][j] = x;
                }
            }
            c = out;
        }
        for _ in 0..dv {
            c = c.into_iter().map(|row| {
                let mut d = Chebyshev { a: self.v.0, b: self.v.1, coeffs: row }.derivative().coeffs;
                d.resize(deg, 0.0);
                d
            }).collect();
        }
        Self { u: self.u, v: self.v, coeffs: c }
    }

    fn eval(&self, a: f64, b: f64) -> f64 {
        let col: Vec<f64> = self.coeffs.iter().map(|row| Chebyshev { a: self.v.0, b: self.v.1, coeffs: row.clone() }.eval(b)).collect();
        Chebyshev { a: self.u.0, b: self.u.1, coeffs: col }.eval(a)
    }
}

/// Minimum of `|∂_u ∂_v 𝒬_τ|` over the box, with
/// `𝒬_τ(u,v) = φ_l(u,v) - φ_l(u-τ, v+b2 τ)`, and that minimum over `|τ|`.
pub fn mixed_derivative_floor_q(p: &Polynomial, l: usize, j: i32, tau: f64, b2: f64, grid: &Box2) -> Result<(f64, f64)> {
    let family = CutoffFamily::new();
    let in_band = |x: f64| family.phi_hat(x) != 0.0;
    for corner_u in [grid.u.0, grid.u.1] {
        for corner_v in [grid.v.0, grid.v.1] {
            for (a, b) in [(corner_u, corner_v), (corner_u - tau, corner_v + b2 * tau)] {
                if !in_band(a) || !in_band(b) {
                    return Err(invalid(format!("({a}, {b}) outside the Φ̂ band")));
                }
            }
        }
    }
    let setup = MultiplierSetup::new(p, l, j)?;
    let phi = |u: f64, v: f64| -> Result<f64> {
        let mut roots = Vec::new();
        for iv in [(-2.0, -0.5), (0.5, 2.0)] {
            match stationary_points(&setup, u, v, iv) {
                Ok(r) => roots.extend(r),
                Err(Error::NoStationaryPoint) => {}
                Err(e) => return Err(e),
            }
        }
        finish_phase(&setup, u, v, roots).map(|x| x.1)
    };
    // validate every sample before building the interpolant
    let deg = 24;
    let (u, v) = (grid.u, grid.v);
    for k in 0..=deg {
        for m in 0..=deg {
            let a = Chebyshev::map_to(u.0, u.1, (PI * k as f64 / deg as f64).cos());
            let b = Chebyshev::map_to(v.0, v.1, (PI * m as f64 / deg as f64).cos());
            phi(a, b)?;
            phi(a - tau, b + b2 * tau)?;
        }
    }
    let q = |a: f64, b: f64| phi(a, b).unwrap_or(f64::NAN) - phi(a - tau, b + b2 * tau).unwrap_or(f64::NAN);
    let c = Cheb2::fit(q, u, v, deg).mixed(1, 1);
    let n = grid.n.max(2);
    let mut min_abs = f64::INFINITY;
    for i in 0..n {
        for k in 0..n {
            let a = u.0 + (u.1 - u.0) * i as f64 / (n - 1) as f64;
            let b = v.0 + (v.1 - v.0) * k as f64 / (n - 1) as f64;
            min_abs = min_abs.min(c.eval(a, b).abs());
        }
    }
    let ratio = if tau == 0.0 { 0.0 } else { min_abs / tau.abs() };
    Ok((min_abs, ratio))
}

/// `|∬_{I1×I2} e^{iλψ} f(x) g(y) dx dy|` over a λ ladder, normalised by
/// `||f||_2 ||g||_2`, with the fitted decay exponent `ε = -slope`.
#[allow(clippy::too_many_arguments)]
pub fn bilinear_oscillatory_decay<Psi: Fn(f64, f64) -> f64 + Sync>(
    psi: Psi,
    k: usize,
    lambda_list: &[f64],
    f: &GridFunction,
    g: &GridFunction,
    i1: (f64, f64),
    i2: (f64, f64),
    node_budget: usize,
) -> Result<ExperimentReport> {
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    let cheb = Cheb2::fit(&psi, i1, i2, 24);
    let dk = cheb.mixed(k, 1);
    let d21 = cheb.mixed(2, 1);
    let mut floor = f64::INFINITY;
    let mut convex = true;
    let s = 32;
    let mut grad_sup = 0.0_f64;
    let (gx, gy) = (cheb.mixed(1, 0), cheb.mixed(0, 1));
    for a in 0..=s {
        for b in 0..=s {
            let x = i1.0 + (i1.1 - i1.0) * a as f64 / s as f64;
            let y = i2.0 + (i2.1 - i2.0) * b as f64 / s as f64;
            floor = floor.min(dk.eval(x, y).abs());
            if k == 1 && d21.eval(x, y).abs() < 1e-9 {
                convex = false;
            }
            grad_sup = grad_sup.max(gx.eval(x, y).abs()).max(gy.eval(x, y).abs());
        }
    }
    if floor < 1.0 - 1e-9 {
        return Err(Error::DerivativeFloor(format!("min |∂x^{k}∂y ψ| = {floor}")));
    }
    let norm = f.lp_norm(2.0)? * g.lp_norm(2.0)?;
    if norm == 0.0 {
        return Err(invalid("f and g must be nonzero"));
    }
    let (gx_nodes, gw) = gauss_legendre(16);
    let mut report = ExperimentReport::new("decay", &["lambda", "value", "normalized"]);
    let mut pts = Vec::new();
    for &lambda in lambda_list {
        let periods = |len: f64| lambda.abs() * grad_sup * len / (2.0 * PI);
        let panels = |len: f64| ((10.0 * periods(len) / 16.0).ceil() as usize).max(((len / f.step().min(g.step())) / 4.0).ceil() as usize).max(8);
        let (px, py) = (panels(i1.1 - i1.0), panels(i2.1 - i2.0));
        let total = px * py * 256;
        if total > node_budget {
            return Err(Error::NodeBudget { required: total, budget: node_budget });
        }
        let nodes = |iv: (f64, f64), p: usize| -> Vec<(f64, f64)> {
            let h = (iv.1 - iv.0) / p as f64;
            let mut v = Vec::with_capacity(p * 16);
            for q in 0..p {
                let mid = iv.0 + (q as f64 + 0.5) * h;
                for (x, w) in gx_nodes.iter().zip(&gw) {
                    v.push((mid + 0.5 * h * x, 0.5 * h * w));
                }
            }
            v
        };
        let xs: Vec<(f64, f64)> = nodes(i1, px).into_iter().map(|(x, w)| (x, w * f.eval(x))).filter(|p| p.1 != 0.0).collect();
        let ys: Vec<(f64, f64)> = nodes(i2, py).into_iter().map(|(y, w)| (y, w * g.eval(y))).filter(|p| p.1 != 0.0).collect();
        let val: Complex64 = xs
            .par_iter()
            .map(|&(x, wx)| {
                let mut s = Complex64::new(0.0, 0.0);
                for &(y, wy) in &ys {
                    s += Complex64::from_polar(wy, lambda * psi(x, y));
                }
                s * wx
            })
            .reduce(|| Complex64::new(0.0, 0.0), |a, b| a + b);
        let v = val.norm();
        report.push_row(vec![lambda.into(), v.into(), (v / norm).into()]);
        if lambda > 0.0 && v > 0.0 {
            pts.push((lambda, v / norm));
        }
    }
    if pts.len() >= 3 {
        let fit = fit_decay_exponent(&pts)?;
        report.fit("epsilon", -fit.slope);
        report.fit("r_squared", fit.r_squared);
        let envelope_first = pts.iter().map(|p| p.1).fold(0.0_f64, f64::max);
        let envelope_last = pts[pts.len() - 1].1;
        report.flag("decaying", envelope_last < envelope_first, false);
    }
    report.flag("convexity", k != 1 || convex, false);
    Ok(report)
}

/// `|∫ e^{-2πi 2^m (tξ + t²η)} ρ(t) dt| 2^{m/2}` and its limit
/// `ρ(t0) (2|η|)^{-1/2}`, `t0 = -ξ/(2η)`.
pub fn stationary_phase_normalized(m: i32, xi: f64, eta: f64, family: &CutoffFamily) -> Result<(f64, f64)> {
    let phase = |t: f64| t * xi + t * t * eta;
    let amp = |t: f64| family.rho(t);
    let lambda = -2.0 * PI * 2f64.powi(m);
    let val = oscillatory_integral(&phase, &amp, lambda, (-2.0, -0.5))? + oscillatory_integral(&phase, &amp, lambda, (0.5, 2.0))?;
    let t0 = -xi / (2.0 * eta);
    Ok((val.norm() * 2f64.powf(m as f64 / 2.0), family.rho(t0).abs() / (2.0 * eta.abs()).sqrt()))
}
