//! Uniformly sampled functions, L^p functionals, the smooth cutoffs
//! Θ / Φ̂ / ρ, Littlewood–Paley pieces and the Hardy–Littlewood maximal
//! function.

use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::report::fmt_f64;

/// Samples of a real function at `n` equispaced nodes `lo..=hi`.
///
/// Evaluation between nodes is linear; outside `[lo, hi]` the function is
/// zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(invalid("grid needs at least two samples"));
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(invalid("grid needs hi > lo"));
        }
        Ok(Self { lo, hi, n: values.len(), values })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(lo: f64, hi: f64, n: usize, f: F) -> Result<Self> {
        if n < 2 {
            return Err(invalid("grid needs at least two samples"));
        }
        let step = (hi - lo) / (n - 1) as f64;
        Self::new(lo, hi, (0..n).map(|i| f(lo + i as f64 * step)).collect())
    }

    pub fn zeros(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::from_fn(lo, hi, n, |_| 0.0)
    }

    /// Indicator of `[a, b]` sampled on the grid.
    pub fn indicator(lo: f64, hi: f64, n: usize, a: f64, b: f64) -> Result<Self> {
        Self::from_fn(lo, hi, n, |x| if x >= a && x <= b { 1.0 } else { 0.0 })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Linear interpolation with zero extension.
    pub fn eval(&self, x: f64) -> f64 {
        if !(x >= self.lo && x <= self.hi) {
            return 0.0;
        }
        let s = (x - self.lo) / self.step();
        let i = (s.floor() as usize).min(self.n - 2);
        let w = s - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    /// Same grid, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.n {
            return Err(invalid("value count does not match grid"));
        }
        Ok(Self { lo: self.lo, hi: self.hi, n: self.n, values })
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self { lo: self.lo, hi: self.hi, n: self.n, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.n == other.n && self.lo == other.lo && self.hi == other.hi
    }

    /// `a*self + b*other` on a shared grid.
    pub fn lincomb(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if !self.same_grid(other) {
            return Err(invalid("grids differ"));
        }
        self.with_values(self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect())
    }

    /// `x -> f(x - s * step)`, i.e. a translation by `s` grid steps, with zeros
    /// shifted in.
    pub fn shift_steps(&self, s: i64) -> Self {
        let n = self.n as i64;
        let values = (0..n)
            .map(|i| {
                let k = i - s;
                if k >= 0 && k < n {
                    self.values[k as usize]
                } else {
                    0.0
                }
            })
            .collect();
        Self { lo: self.lo, hi: self.hi, n: self.n, values }
    }

    fn trapezoid_weights(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.step();
        let n = self.n;
        (0..n).map(move |i| if i == 0 || i + 1 == n { 0.5 * h } else { h })
    }

    /// Trapezoid integral of the samples.
    pub fn integral(&self) -> f64 {
        self.values.iter().zip(self.trapezoid_weights()).map(|(v, w)| v * w).sum()
    }

    /// `(∫|f|^p)^{1/p}` with trapezoid weights; a quasi-norm for `p < 1`.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if !(p > 0.0) || !p.is_finite() {
            return Err(invalid("lp_norm: p must lie in (0, inf)"));
        }
        let s: f64 = self.values.iter().zip(self.trapezoid_weights()).map(|(v, w)| v.abs().powf(p) * w).sum();
        Ok(s.powf(1.0 / p))
    }

    /// `sup_λ λ |{|f| >= λ}|^{1/p}` over the given λ values, with the
    /// distribution function measured by the trapezoid weights of the nodes.
    pub fn weak_lp_quasinorm(&self, p: f64, lambda_grid: &[f64]) -> Result<f64> {
        if !(p > 0.0) {
            return Err(invalid("weak_lp_quasinorm: p must be positive"));
        }
        if lambda_grid.is_empty() || lambda_grid.iter().any(|&l| !(l > 0.0)) {
            return Err(invalid("weak_lp_quasinorm: lambda grid must be nonempty and positive"));
        }
        let mut pairs: Vec<(f64, f64)> = self.values.iter().map(|v| v.abs()).zip(self.trapezoid_weights()).collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut lambdas = lambda_grid.to_vec();
        lambdas.sort_by(|a, b| b.total_cmp(a));
        let mut best = 0.0_f64;
        let mut mass = 0.0;
        let mut k = 0;
        for &l in &lambdas {
            while k < pairs.len() && pairs[k].0 >= l {
                mass += pairs[k].1;
                k += 1;
            }
            best = best.max(l * mass.powf(1.0 / p));
        }
        Ok(best)
    }

    /// Dyadic λ grid with 64 points per octave spanning
    /// `[min |f| > 0, max |f|]`.
    pub fn default_lambda_grid(&self) -> Vec<f64> {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0_f64;
        for v in &self.values {
            let a = v.abs();
            if a > 0.0 {
                lo = lo.min(a);
                hi = hi.max(a);
            }
        }
        if hi == 0.0 {
            return vec![1.0];
        }
        let octaves = (hi / lo).log2();
        let count = (octaves * 64.0).ceil() as usize;
        let mut grid: Vec<f64> = (0..=count).map(|k| hi * 2f64.powf(-(k as f64) / 64.0)).filter(|&l| l >= lo).collect();
        grid.push(lo);
        grid
    }

    /// `f ∗ Φ_k` by discrete Fourier multiplication with `Φ̂(ξ / 2^k)`.
    ///
    /// The samples are treated as one period of a periodic signal.
    pub fn littlewood_paley_piece(&self, k: f64, family: &CutoffFamily) -> Result<Self> {
        let step = self.step();
        let nyquist = 0.5 / step;
        if 2f64.powf(k) * 2.0 >= nyquist {
            return Err(Error::ScaleTooFine);
        }
        let scale = 2f64.powf(-k);
        Ok(self.fourier_multiplier(|xi| Complex64::new(family.phi_hat(xi * scale), 0.0)))
    }

    /// Real part of the periodic discrete Fourier multiplier `m(ξ)`, with `ξ`
    /// in cycles per unit length.
    pub fn fourier_multiplier<M: Fn(f64) -> Complex64>(&self, m: M) -> Self {
        let n = self.n;
        let mut buf: Vec<Complex64> = self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let mut planner = FftPlanner::new();
        planner.plan_fft_forward(n).process(&mut buf);
        let period = n as f64 * self.step();
        for (k, c) in buf.iter_mut().enumerate() {
            let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            *c *= m(kk / period);
        }
        planner.plan_fft_inverse(n).process(&mut buf);
        let inv = 1.0 / n as f64;
        Self { lo: self.lo, hi: self.hi, n, values: buf.iter().map(|c| c.re * inv).collect() }
    }

    /// Uncentered Hardy–Littlewood maximal function of `|f|` for the counting
    /// measure on the grid: the largest mean of `|f|` over runs of nodes
    /// containing each node.
    pub fn hl_maximal(&self) -> Self {
        let n = self.n;
        let mut prefix = vec![0.0; n + 1];
        for i in 0..n {
            prefix[i + 1] = prefix[i] + self.values[i].abs();
        }
        let mut out = vec![0.0_f64; n];
        // For each left end a, sweep right ends downward keeping the best
        // mean over [a, b'] with b' >= b; that value bounds every node b >= a.
        for a in 0..n {
            let mut run = 0.0_f64;
            for b in (a..n).rev() {
                let avg = (prefix[b + 1] - prefix[a]) / (b - a + 1) as f64;
                run = run.max(avg);
                if run > out[b] {
                    out[b] = run;
                }
            }
        }
        for (o, v) in out.iter_mut().zip(&self.values) {
            *o = o.max(v.abs());
        }
        Self { lo: self.lo, hi: self.hi, n, values: out }
    }

    /// `∫_a^b f(x - t) k(t) dt` at each node by the trapezoid rule with at
    /// least 8 nodes per grid step.
    pub fn convolve<K: Fn(f64) -> f64 + Sync>(&self, kernel: K, support: (f64, f64)) -> Result<Self> {
        let (a, b) = support;
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(invalid("convolve: support must be a bounded interval"));
        }
        let m = ((8.0 * (b - a) / self.step()).ceil() as usize).max(16);
        let dt = (b - a) / m as f64;
        let ts: Vec<f64> = (0..=m).map(|i| a + i as f64 * dt).collect();
        let ws: Vec<f64> = (0..=m).map(|i| if i == 0 || i == m { 0.5 * dt * kernel(ts[i]) } else { dt * kernel(ts[i]) }).collect();
        let values = (0..self.n)
            .map(|i| {
                let x = self.x(i);
                ts.iter().zip(&ws).map(|(t, w)| self.eval(x - t) * w).sum()
            })
            .collect();
        self.with_values(values)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| invalid(format!("csv: {e}"));
        wr.write_record(["x", "value"]).map_err(io)?;
        for i in 0..self.n {
            wr.write_record([fmt_f64(self.x(i)), fmt_f64(self.values[i])]).map_err(io)?;
        }
        wr.flush().map_err(|e| invalid(format!("csv: {e}")))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Reads the `x,value` layout written by [`GridFunction::write_csv`].
    pub fn from_csv_str(s: &str) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(s.as_bytes());
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| invalid(format!("csv: {e}")))?;
            let p = |i: usize| -> Result<f64> {
                rec.get(i).ok_or_else(|| invalid("csv: short row"))?.trim().parse::<f64>().map_err(|e| invalid(format!("csv: {e}")))
            };
            xs.push(p(0)?);
            vs.push(p(1)?);
        }
        if xs.len() < 2 {
            return Err(invalid("csv: need at least two rows"));
        }
        Self::new(xs[0], xs[xs.len() - 1], vs)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("grid functions serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let g: Self = serde_json::from_str(s).map_err(|e| invalid(format!("json: {e}")))?;
        if g.values.len() != g.n {
            return Err(invalid("json: n does not match values"));
        }
        Self::new(g.lo, g.hi, g.values)
    }
}

/// The smooth cutoffs used throughout.
///
/// `theta` is 1 on `|ξ| <= 1/2`, 0 on `|ξ| >= 1`, with the C^∞ glue
/// `e(1-s) / (e(1-s) + e(s))`, `e(x) = exp(-1/x)`, `s = 2|ξ| - 1`.
/// `phi_hat(ξ) = theta(ξ/2) - theta(ξ)` lives on `1/2 < |ξ| < 2` and
/// `rho(t) = psi(|t|)/t` with `psi = phi_hat` is odd with
/// `Σ_j 2^j rho(2^j t) = 1/t`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CutoffFamily;

fn glue(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

impl CutoffFamily {
    pub fn new() -> Self {
        Self
    }

    pub fn theta(&self, xi: f64) -> f64 {
        let a = xi.abs();
        if a <= 0.5 {
            1.0
        } else if a >= 1.0 {
            0.0
        } else {
            let s = 2.0 * a - 1.0;
            let e0 = glue(1.0 - s);
            let e1 = glue(s);
            e0 / (e0 + e1)
        }
    }

    /// Derivative of `theta`.
    pub fn theta_prime(&self, xi: f64) -> f64 {
        let a = xi.abs();
        if a <= 0.5 || a >= 1.0 {
            return 0.0;
        }
        let s = 2.0 * a - 1.0;
        let u = 1.0 - s;
        let e0 = glue(u);
        let e1 = glue(s);
        let de0 = -e0 / (u * u);
        let de1 = e1 / (s * s);
        let dds = (de0 * e1 - e0 * de1) / ((e0 + e1) * (e0 + e1));
        dds * 2.0 * xi.signum()
    }

    pub fn phi_hat(&self, xi: f64) -> f64 {
        self.theta(xi / 2.0) - self.theta(xi)
    }

    pub fn phi_hat_prime(&self, xi: f64) -> f64 {
        0.5 * self.theta_prime(xi / 2.0) - self.theta_prime(xi)
    }

    pub fn psi(&self, t: f64) -> f64 {
        self.phi_hat(t.abs())
    }

    pub fn rho(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        self.psi(t) / t
    }

    /// `ρ_j(t) = 2^j ρ(2^j t)`.
    pub fn rho_j(&self, j: i32, t: f64) -> f64 {
        let s = 2f64.powi(j);
        s * self.rho(s * t)
    }

    /// `∫|ρ|`, which is scale invariant.
    pub fn rho_l1(&self) -> f64 {
        let m = 20_000;
        let h = 1.5 / m as f64;
        2.0 * (0..=m).map(|i| {
            let w = if i == 0 || i == m { 0.5 } else { 1.0 };
            w * h * self.rho(0.5 + i as f64 * h).abs()
        }).sum::<f64>()
    }
}

/// Positive component `(2^{-j-1}, 2^{-j+1})` of the support of `ρ_j`.
pub fn rho_j_support(j: i32) -> (f64, f64) {
    (2f64.powi(-j - 1), 2f64.powi(-j + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lp_norm_examples() {
        let f = GridFunction::indicator(-1.0, 2.0, 3001, 0.0, 1.0).unwrap();
        let step = f.step();
        assert!((f.lp_norm(2.0).unwrap() - 1.0).abs() <= 2.0 * step);
        let delta = 0.01;
        let f = GridFunction::indicator(-0.01, 0.03, 4001, 0.0, delta).unwrap();
        let p1 = 1.3;
        // the p-th power is the measure of the support, off by at most one step
        assert!((f.lp_norm(p1).unwrap().powf(p1) - delta).abs() <= 2.0 * f.step());
        assert!((f.lp_norm(p1).unwrap() / delta.powf(1.0 / p1) - 1.0).abs() < 0.01);
        assert_eq!(GridFunction::zeros(0.0, 1.0, 10).unwrap().lp_norm(0.5).unwrap(), 0.0);
        assert!(f.lp_norm(0.0).is_err());
        assert!(f.lp_norm(-1.0).is_err());
    }

    #[test]
    fn weak_norm_examples() {
        let f = GridFunction::indicator(-1.0, 2.0, 3001, 0.0, 1.0).unwrap();
        let w = f.weak_lp_quasinorm(2.0, &f.default_lambda_grid()).unwrap();
        assert!((w - 1.0).abs() < 2.0 * f.step());
        let n = 200_001;
        let g = GridFunction::from_fn(0.0, 1.0, n, |x| if x > 0.0 { x.powf(-0.5) } else { 0.0 }).unwrap();
        let w = g.weak_lp_quasinorm(2.0, &g.default_lambda_grid()).unwrap();
        assert!((w - 1.0).abs() < 1e-2, "{w}");
        let z = GridFunction::zeros(0.0, 1.0, 10).unwrap();
        assert_eq!(z.weak_lp_quasinorm(2.0, &z.default_lambda_grid()).unwrap(), 0.0);
    }

    #[test]
    fn cutoff_properties() {
        let c = CutoffFamily::new();
        assert_eq!(c.theta(0.3), 1.0);
        assert_eq!(c.theta(1.2), 0.0);
        assert_eq!(c.phi_hat(0.49), 0.0);
        assert_eq!(c.phi_hat(2.01), 0.0);
        assert_eq!(c.phi_hat(1.0), 1.0);
        for i in 0..1000 {
            let t = -3.0 + 6.0 * i as f64 / 999.0;
            assert_eq!(c.rho(t), -c.rho(-t));
        }
        // telescoping partition of unity
        for &t in &[0.013, 0.3, 1.0, 1.7, 25.0, -0.2, -7.5] {
            let s: f64 = (-20..=20).map(|j| c.rho_j(j, t)).sum();
            assert!((s - 1.0 / t).abs() < 1e-12 * (1.0 / t).abs());
        }
        // analytic derivative against differences
        for &x in &[0.55, 0.7, 0.9, -0.8] {
            let h = 1e-6;
            let fd = (c.theta(x + h) - c.theta(x - h)) / (2.0 * h);
            assert!((fd - c.theta_prime(x)).abs() < 1e-6);
        }
    }

    #[test]
    fn lp_piece_examples() {
        let c = CutoffFamily::new();
        let n = 1024;
        let lo = 0.0;
        let period = 8.0;
        let hi = period * (n - 1) as f64 / n as f64;
        let omega = 1.0;
        let f = GridFunction::from_fn(lo, hi, n, |x| (2.0 * std::f64::consts::PI * omega * x).cos()).unwrap();
        let piece = f.littlewood_paley_piece(0.0, &c).unwrap();
        for i in 0..n {
            assert!((piece.values[i] - f.values[i]).abs() < 1e-10);
        }
        let k = GridFunction::from_fn(lo, hi, n, |_| 3.0).unwrap().littlewood_paley_piece(0.0, &c).unwrap();
        assert!(k.values.iter().all(|v| v.abs() < 1e-10));
        // band-limited signal: frequencies in [1/8, 4]; pieces k = -6..=4 telescope
        let g = GridFunction::from_fn(lo, hi, n, |x| {
            let tau = 2.0 * std::f64::consts::PI;
            (tau * 0.125 * x).sin() + 0.5 * (tau * 1.5 * x).cos() + 0.25 * (tau * 4.0 * x).sin()
        })
        .unwrap();
        let mut sum = vec![0.0; n];
        for k in -6..=4 {
            let p = g.littlewood_paley_piece(k as f64, &c).unwrap();
            for i in 0..n {
                sum[i] += p.values[i];
            }
        }
        for i in 0..n {
            assert!((sum[i] - g.values[i]).abs() < 1e-8);
        }
        assert_eq!(g.littlewood_paley_piece(5.0, &c), Err(Error::ScaleTooFine));
    }

    #[test]
    fn maximal_examples() {
        let f = GridFunction::indicator(-1.0, 3.0, 401, 0.0, 1.0).unwrap();
        let m = f.hl_maximal();
        let at = |x: f64| m.values[((x - f.lo) / f.step()).round() as usize];
        assert!((at(2.0) - 0.5).abs() < 0.01);
        assert!((at(0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn maximal_matches_brute_force() {
        let vals = [0.3, 0.0, 1.0, 0.2, 0.9, 0.0, 0.0, 2.0, 0.1];
        let f = GridFunction::new(0.0, 1.0, vals.to_vec()).unwrap();
        let m = f.hl_maximal();
        for i in 0..vals.len() {
            let mut best = 0.0_f64;
            for a in 0..=i {
                for b in i..vals.len() {
                    best = best.max(vals[a..=b].iter().sum::<f64>() / (b - a + 1) as f64);
                }
            }
            assert!((m.values[i] - best).abs() < 1e-15);
        }
    }

    #[test]
    fn convolve_examples() {
        let f = GridFunction::from_fn(-4.0, 4.0, 801, |x| (-x * x).exp()).unwrap();
        let w = 0.02;
        let bump = |t: f64| if t.abs() < w { (1.0 - (t / w).powi(2)) * 0.75 / w } else { 0.0 };
        let g = f.convolve(bump, (-w, w)).unwrap();
        for i in 100..700 {
            assert!((g.values[i] - f.values[i]).abs() < 5.0 * w * w);
        }
        let one = GridFunction::from_fn(-10.0, 10.0, 201, |_| 1.0).unwrap();
        let c = one.convolve(|t| t * t, (0.0, 1.0)).unwrap();
        assert!((c.values[100] - 1.0 / 3.0).abs() < 1e-3);
        let s = 7;
        let a = f.convolve(|t| (-(t - 0.1) * (t - 0.1) * 30.0).exp(), (-0.5, 0.7)).unwrap();
        let b = f.shift_steps(s).convolve(|t| (-(t - 0.1) * (t - 0.1) * 30.0).exp(), (-0.5, 0.7)).unwrap();
        for i in 200..600 {
            assert!((b.values[i + s as usize] - a.values[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn serialization_round_trip() {
        let f = GridFunction::from_fn(-1.0, 2.0, 37, |x| x.sin() / 3.0).unwrap();
        assert!(f.to_csv_string().starts_with("x,value\n"));
        assert_eq!(GridFunction::from_csv_str(&f.to_csv_string()).unwrap().values, f.values);
        assert_eq!(GridFunction::from_json(&f.to_json()).unwrap(), f);
    }

    fn grid_values() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-3.0f64..3.0, 2..60)
    }

    proptest! {
        #[test]
        fn weak_below_strong(v in grid_values(), p in 0.5f64..4.0) {
            let f = GridFunction::new(0.0, 1.0, v).unwrap();
            let w = f.weak_lp_quasinorm(p, &f.default_lambda_grid()).unwrap();
            prop_assert!(w <= f.lp_norm(p).unwrap() * (1.0 + 1e-12));
        }

        #[test]
        fn maximal_sublinear(v in grid_values(), s in any::<u64>()) {
            let f = GridFunction::new(0.0, 1.0, v.clone()).unwrap();
            let w: Vec<f64> = v.iter().enumerate().map(|(i, x)| ((s >> (i % 60)) & 1) as f64 * x.cos()).collect();
            let g = f.with_values(w).unwrap();
            let sum = f.lincomb(1.0, &g, 1.0).unwrap();
            let (ms, mf, mg) = (sum.hl_maximal(), f.hl_maximal(), g.hl_maximal());
            for i in 0..f.n {
                prop_assert!(ms.values[i] <= mf.values[i] + mg.values[i] + 1e-12);
                prop_assert!(mf.values[i] >= f.values[i].abs());
            }
        }

        #[test]
        fn maximal_weak_11(intervals in prop::collection::vec((0.0f64..9.0, 0.01f64..1.0), 1..5), lam in 0.05f64..0.9) {
            let f = GridFunction::from_fn(0.0, 10.0, 2001, |x| {
                if intervals.iter().any(|&(a, w)| x >= a && x <= a + w) { 1.0 } else { 0.0 }
            }).unwrap();
            let m = f.hl_maximal();
            let mass: f64 = f.values.iter().sum::<f64>() * f.step();
            let big = m.values.iter().filter(|&&v| v > lam).count() as f64 * f.step();
            prop_assert!(big <= 4.0 / lam * mass);
        }
    }
}
