//! Real polynomials: evaluation, derivatives, real roots with multiplicities,
//! sublevel-set measures and log-log exponent fitting.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::report::ExperimentReport;

/// Polynomial with real coefficients, stored from the constant term upward.
///
/// Curves `P(t) = a_1 t + ... + a_d t^d` are built with [`Polynomial::new`],
/// which fixes the constant term at zero. Derived polynomials such as `P' - 1`
/// carry a constant term and are built with [`Polynomial::from_full`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    /// `coeffs[k-1]` is `a_k`; the constant term is zero.
    pub fn new(a: &[f64]) -> Self {
        let mut coeffs = Vec::with_capacity(a.len() + 1);
        coeffs.push(0.0);
        coeffs.extend_from_slice(a);
        Self::from_full(&coeffs)
    }

    /// `coeffs[k]` is the coefficient of `t^k`, constant term included.
    pub fn from_full(coeffs: &[f64]) -> Self {
        let mut coeffs = coeffs.to_vec();
        while coeffs.len() > 1 && coeffs[coeffs.len() - 1] == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    pub fn monomial(c: f64, k: usize) -> Self {
        let mut coeffs = vec![0.0; k + 1];
        coeffs[k] = c;
        Self::from_full(&coeffs)
    }

    /// Coefficients from the constant term upward.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of `t^k` (zero beyond the degree).
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    /// Largest index with a nonzero coefficient; 0 for constants.
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    /// Fails with [`Error::LinearTerm`] when `a_1 != 0`.
    pub fn require_no_linear_term(&self) -> Result<()> {
        let a1 = self.coeff(1);
        if a1 != 0.0 {
            return Err(Error::LinearTerm(a1));
        }
        Ok(())
    }

    /// Horner evaluation.
    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn derivative(&self) -> Self {
        if self.coeffs.len() == 1 {
            return Self::from_full(&[0.0]);
        }
        let d: Vec<f64> = self.coeffs.iter().enumerate().skip(1).map(|(k, &c)| k as f64 * c).collect();
        Self::from_full(&d)
    }

    pub fn nth_derivative(&self, n: usize) -> Self {
        (0..n).fold(self.clone(), |p, _| p.derivative())
    }

    /// Value and first derivative in one Horner pass.
    pub fn eval_with_derivative(&self, t: f64) -> (f64, f64) {
        let mut p = 0.0;
        let mut dp = 0.0;
        for &c in self.coeffs.iter().rev() {
            dp = dp * t + p;
            p = p * t + c;
        }
        (p, dp)
    }

    /// `P_l = P - a_l t^l`.
    pub fn truncate_term(&self, l: usize) -> Result<Self> {
        if l < 2 || l > self.degree() {
            return Err(invalid(format!("truncate_term: l = {l} outside [2, {}]", self.degree())));
        }
        let mut c = self.coeffs.clone();
        c[l] = 0.0;
        Ok(Self::from_full(&c))
    }

    pub fn add_constant(&self, c: f64) -> Self {
        let mut v = self.coeffs.clone();
        v[0] += c;
        Self::from_full(&v)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_full(&self.coeffs.iter().map(|a| a * c).collect::<Vec<_>>())
    }

    /// `t -> P(s t)`.
    pub fn dilate(&self, s: f64) -> Self {
        let mut pow = 1.0;
        let mut v = Vec::with_capacity(self.coeffs.len());
        for &c in &self.coeffs {
            v.push(c * pow);
            pow *= s;
        }
        Self::from_full(&v)
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut v = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                v[i + j] += a * b;
            }
        }
        Self::from_full(&v)
    }

    /// Product of `(t - r)^m` over the given roots.
    pub fn from_roots(roots: &[(f64, usize)]) -> Self {
        let mut p = Self::from_full(&[1.0]);
        for &(r, m) in roots {
            for _ in 0..m {
                p = p.mul(&Self::from_full(&[-r, 1.0]));
            }
        }
        p
    }

    /// Antiderivative with zero constant term.
    pub fn integral(&self) -> Self {
        let mut v = vec![0.0];
        v.extend(self.coeffs.iter().enumerate().map(|(k, c)| c / (k as f64 + 1.0)));
        Self::from_full(&v)
    }

    /// Real roots in `[lo, hi]` with multiplicities.
    ///
    /// Critical points come from the roots of `P'` (recursively), so `P` is
    /// monotone between consecutive breakpoints and every simple root is
    /// bracketed. A critical point where `|P| <= tol` is itself a root of
    /// multiplicity >= 2. The order of a root is the smallest `m` with
    /// `|P^(m)(r)| > 1e-6 (1 + max|a_k|)`.
    pub fn real_roots_with_orders(&self, lo: f64, hi: f64, tol: f64) -> Result<Vec<(f64, usize)>> {
        if !(tol > 0.0) {
            return Err(invalid("tol must be positive"));
        }
        if !(hi > lo) {
            return Err(invalid("empty interval"));
        }
        if self.is_zero() {
            return Err(Error::ZeroPolynomial);
        }
        let roots = root_positions(self, lo, hi, tol);
        let tol_order = 1e-6 * (1.0 + self.max_abs_coeff());
        let derivs: Vec<Polynomial> = (1..=self.degree()).map(|m| self.nth_derivative(m)).collect();
        let order_at = |r: f64| {
            derivs.iter().position(|d| d.eval(r).abs() > tol_order).map_or(self.degree(), |i| i + 1)
        };
        // Candidates that |P| cannot tell apart at this tolerance form one root.
        let mut clusters: Vec<(f64, usize)> = Vec::with_capacity(roots.len());
        for r in roots {
            let m = order_at(r);
            if let Some(last) = clusters.last_mut() {
                let a = last.0;
                if (1..16).all(|i| self.eval(a + (r - a) * i as f64 / 16.0).abs() <= tol) {
                    if m > last.1 {
                        *last = (r, m);
                    }
                    continue;
                }
            }
            clusters.push((r, m));
        }
        let mut out = Vec::with_capacity(clusters.len());
        let mut total = 0;
        for (r, m) in clusters {
            let m = m.min(self.degree() - total);
            if m == 0 {
                break;
            }
            total += m;
            out.push((r, m));
        }
        Ok(out)
    }
}

fn root_positions(p: &Polynomial, lo: f64, hi: f64, tol: f64) -> Vec<f64> {
    if p.degree() == 0 {
        return Vec::new();
    }
    if p.degree() == 1 {
        let r = -p.coeff(0) / p.coeff(1);
        return if r >= lo && r <= hi { vec![r] } else { Vec::new() };
    }
    let crit = root_positions(&p.derivative(), lo, hi, tol);
    let mut breaks = Vec::with_capacity(crit.len() + 2);
    breaks.push(lo);
    breaks.extend(crit.iter().copied().filter(|&c| c > lo && c < hi));
    breaks.push(hi);
    let vals: Vec<f64> = breaks.iter().map(|&x| p.eval(x)).collect();
    let is_root: Vec<bool> = vals.iter().map(|v| v.abs() <= tol).collect();
    let mut roots = Vec::new();
    for i in 0..breaks.len() {
        if is_root[i] {
            roots.push(breaks[i]);
        }
        if i + 1 < breaks.len() && !is_root[i] && !is_root[i + 1] && vals[i].signum() != vals[i + 1].signum() {
            roots.push(bracketed_root(p, breaks[i], breaks[i + 1], vals[i]));
        }
    }
    roots.dedup_by(|a, b| (*a - *b).abs() <= tol * (1.0 + b.abs()));
    roots
}

/// Bisection on a monotone bracket followed by Newton polishing kept inside
/// the bracket.
fn bracketed_root(p: &Polynomial, mut a: f64, mut b: f64, fa: f64) -> f64 {
    let sa = fa.signum();
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = p.eval(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    let mut x = 0.5 * (a + b);
    for _ in 0..3 {
        let (v, dv) = p.eval_with_derivative(x);
        if dv == 0.0 {
            break;
        }
        let nx = x - v / dv;
        if nx < a || nx > b || p.eval(nx).abs() > v.abs() {
            break;
        }
        x = nx;
    }
    x
}

/// Lebesgue measure of `{t in [lo, hi] : |g(t)| < h}`.
///
/// `g` is sampled at `resolution + 1` points. Zero crossings of `g` and
/// discrete local minima of `|g|` are located and inserted as extra nodes so
/// that narrow dips between samples are seen. Each change of membership
/// between consecutive nodes is refined by bisection to width `(hi-lo)*1e-9`.
pub fn level_set_measure<G: Fn(f64) -> f64>(g: G, h: f64, lo: f64, hi: f64, resolution: usize) -> Result<f64> {
    if !(h > 0.0) {
        return Err(invalid("level_set_measure: h must be positive"));
    }
    if resolution < 1024 {
        return Err(invalid("level_set_measure: resolution must be at least 1024"));
    }
    if !(hi > lo) {
        return Err(invalid("level_set_measure: empty domain"));
    }
    let n = resolution;
    let dx = (hi - lo) / n as f64;
    let xs: Vec<f64> = (0..=n).map(|i| if i == n { hi } else { lo + i as f64 * dx }).collect();
    let gs: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
    let width = (hi - lo) * 1e-9;

    let mut nodes: Vec<(f64, f64)> = Vec::with_capacity(n + 16);
    for i in 0..=n {
        nodes.push((xs[i], gs[i]));
        if i < n {
            if gs[i] * gs[i + 1] < 0.0 {
                let z = bisect_zero(&g, xs[i], xs[i + 1], gs[i], width);
                nodes.push((z, g(z)));
            }
            if i > 0 && gs[i].abs() <= gs[i - 1].abs() && gs[i].abs() <= gs[i + 1].abs() && gs[i].abs() >= h {
                let (xm, gm) = golden_min_abs(&g, xs[i - 1], xs[i + 1], width);
                if gm.abs() < h {
                    nodes.push((xm, gm));
                }
            }
        }
    }
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));

    let inside = |v: f64| v.abs() < h;
    let mut total = 0.0;
    for w in nodes.windows(2) {
        let (a, ga) = w[0];
        let (b, gb) = w[1];
        if b <= a {
            continue;
        }
        match (inside(ga), inside(gb)) {
            (true, true) => total += b - a,
            (false, false) => {}
            (ia, _) => {
                let c = bisect_membership(&g, h, a, b, ia, width);
                total += if ia { c - a } else { b - c };
            }
        }
    }
    Ok(total.min(hi - lo))
}

fn bisect_zero<G: Fn(f64) -> f64>(g: &G, mut a: f64, mut b: f64, ga: f64, width: f64) -> f64 {
    let sa = ga.signum();
    while b - a > width {
        let m = 0.5 * (a + b);
        let gm = g(m);
        if gm == 0.0 {
            return m;
        }
        if gm.signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn bisect_membership<G: Fn(f64) -> f64>(g: &G, h: f64, mut a: f64, mut b: f64, a_inside: bool, width: f64) -> f64 {
    while b - a > width {
        let m = 0.5 * (a + b);
        if (g(m).abs() < h) == a_inside {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn golden_min_abs<G: Fn(f64) -> f64>(g: &G, mut a: f64, mut b: f64, width: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = g(c).abs();
    let mut fd = g(d).abs();
    while b - a > width {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = g(c).abs();
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = g(d).abs();
        }
    }
    let x = 0.5 * (a + b);
    (x, g(x))
}

/// Least-squares fit of `log y = slope * log x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_decay_exponent(pairs: &[(f64, f64)]) -> Result<PowerFit> {
    if pairs.len() < 3 {
        return Err(invalid("fit_decay_exponent: need at least 3 points"));
    }
    if pairs.iter().any(|&(x, y)| !(x > 0.0) || !(y > 0.0)) {
        return Err(invalid("fit_decay_exponent: values must be positive"));
    }
    let n = pairs.len() as f64;
    let lx: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(invalid("fit_decay_exponent: x values are all equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(PowerFit { slope, intercept, r_squared })
}

/// `h ∈ {2^-4, ..., 2^-14}`.
pub fn default_h_ladder() -> Vec<f64> {
    (4..=14).map(|k| 2f64.powi(-k)).collect()
}

/// Measures `|{t ∈ domain : |P'(t) - 1| < h}|` along `h_list` and compares
/// the fitted slope with `1/m`, `m` the largest order of a root of `P' - 1`
/// in the domain.
pub fn level_set_experiment(p: &Polynomial, h_list: &[f64], domain: (f64, f64)) -> Result<ExperimentReport> {
    let g = p.derivative().add_constant(-1.0);
    let tol = 1e-9 * (1.0 + g.max_abs_coeff());
    let roots = g.real_roots_with_orders(domain.0, domain.1, tol)?;
    let m = roots.iter().map(|r| r.1).max().ok_or_else(|| Error::Empty("roots of P' - 1".into()))?;
    let predicted = 1.0 / m as f64;
    let mut report = ExperimentReport::new("levelset", &["h", "measure", "predicted_exponent"]);
    let mut pairs = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let meas = level_set_measure(|t| g.eval(t), h, domain.0, domain.1, 1 << 14)?;
        pairs.push((h, meas));
        report.push_row(vec![h.into(), meas.into(), predicted.into()]);
    }
    let fit = fit_decay_exponent(&pairs)?;
    report.fit("slope", fit.slope);
    report.fit("intercept", fit.intercept);
    report.fit("r_squared", fit.r_squared);
    report.fit("max_root_order", m as f64);
    report.fit("predicted_exponent", predicted);
    report.flag("slope_matches", (fit.slope - predicted).abs() <= 0.1 * predicted, true);
    Ok(report)
}

/// `P` with `P(0) = 0`, `P'(0) = 0` and `P' - 1 = c ∏ (t - r)^m`; needs
/// every root nonzero.
pub fn with_derivative_roots(roots: &[(f64, usize)]) -> Result<Polynomial> {
    if roots.is_empty() || roots.iter().any(|r| r.0 == 0.0 || r.1 == 0) {
        return Err(invalid("roots must be nonzero with positive order"));
    }
    let q = Polynomial::from_roots(roots);
    let q = q.scale(-1.0 / q.eval(0.0));
    let mut c = q.add_constant(1.0).integral().coeffs().to_vec();
    // exact zero instead of rounding residue
    c[1] = 0.0;
    Ok(Polynomial::from_full(&c))
}
