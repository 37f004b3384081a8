//! Dyadic scale classification: the dominated sets `J_l(N)`, the finite
//! leftover `J_good(N)`, the cardinality bound, and the shift `j_l`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::polynomials::Polynomial;
use crate::tiling::DyadicInterval;

/// Slack used in every log2-domain comparison. Ties inside it are Good.
pub const GUARD: f64 = 1e-9;

/// Default value of the domination parameter `N`.
pub const DEFAULT_N: i32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScaleClass {
    Good,
    Dominated(usize),
}

impl ScaleClass {
    pub fn label(&self) -> String {
        match self {
            ScaleClass::Good => "good".to_string(),
            ScaleClass::Dominated(l) => format!("l={l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalePartition {
    pub n_param: i32,
    pub j_min: i32,
    pub j_max: i32,
    pub degree: usize,
    /// `log2|a_k|` indexed by `k`, `None` for vanishing coefficients.
    pub log2_coeffs: Vec<Option<f64>>,
    /// One entry per `j` in `j_min..=j_max`.
    pub classes: Vec<ScaleClass>,
    /// `j_l = log2|a_l| / (l - 1)` for each nonzero `a_l`, `l >= 2`.
    pub j_l_shifts: BTreeMap<usize, f64>,
    /// Set when `a_1 != 0`; such partitions are exploratory only.
    pub has_linear_term: bool,
}

/// Classifies every `j` in `j_range` into `J_l(N)` or `J_good(N)`.
///
/// `j ∈ J_l(N)` iff `|j| >= N` and
/// `log2|a_l| - j l > log2|a_k| - j k + N + 2d` for every other nonzero `a_k`.
pub fn classify_scales(p: &Polynomial, n_param: i32, j_range: (i32, i32)) -> Result<ScalePartition> {
    let (j_min, j_max) = j_range;
    if j_min > j_max {
        return Err(Error::Empty("scale range".into()));
    }
    if n_param < 1 {
        return Err(invalid("N must be at least 1"));
    }
    if p.is_zero() || p.degree() == 0 {
        return Err(Error::ZeroPolynomial);
    }
    let d = p.degree();
    let log2_coeffs: Vec<Option<f64>> = (0..=d)
        .map(|k| {
            let a = p.coeff(k);
            (k >= 1 && a != 0.0).then(|| a.abs().log2())
        })
        .collect();
    let margin = (n_param + 2 * d as i32) as f64;
    let classes = (j_min..=j_max).map(|j| classify_one(&log2_coeffs, j, n_param, margin)).collect();
    let j_l_shifts = (2..=d)
        .filter_map(|l| log2_coeffs[l].map(|b| (l, b / (l as f64 - 1.0))))
        .collect();
    Ok(ScalePartition {
        n_param,
        j_min,
        j_max,
        degree: d,
        log2_coeffs,
        classes,
        j_l_shifts,
        has_linear_term: p.coeff(1) != 0.0,
    })
}

fn classify_one(b: &[Option<f64>], j: i32, n_param: i32, margin: f64) -> ScaleClass {
    if j.abs() < n_param {
        return ScaleClass::Good;
    }
    let jf = j as f64;
    for (l, bl) in b.iter().enumerate() {
        let Some(bl) = bl else { continue };
        let lhs = bl - jf * l as f64;
        let dominates = b.iter().enumerate().all(|(k, bk)| match bk {
            Some(bk) if k != l => lhs > bk - jf * k as f64 + margin + GUARD,
            _ => true,
        });
        if dominates {
            return ScaleClass::Dominated(l);
        }
    }
    ScaleClass::Good
}

/// Classifies over a range widened until ten scales on each side are
/// dominated.
pub fn classify_scales_auto(p: &Polynomial, n_param: i32) -> Result<ScalePartition> {
    let mut w = 64;
    loop {
        let part = classify_scales(p, n_param, (-w, w))?;
        if part.tails_stable() {
            return Ok(part);
        }
        if w > 1 << 20 {
            return Err(Error::RangeTooNarrow);
        }
        w *= 2;
    }
}

impl ScalePartition {
    pub fn class_of(&self, j: i32) -> Option<ScaleClass> {
        if j < self.j_min || j > self.j_max {
            return None;
        }
        Some(self.classes[(j - self.j_min) as usize])
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, ScaleClass)> + '_ {
        (self.j_min..=self.j_max).zip(self.classes.iter().copied())
    }

    pub fn good(&self) -> Vec<i32> {
        self.iter().filter(|(_, c)| *c == ScaleClass::Good).map(|(j, _)| j).collect()
    }

    pub fn bad(&self) -> Vec<i32> {
        self.iter().filter(|(_, c)| *c != ScaleClass::Good).map(|(j, _)| j).collect()
    }

    /// `J_l(N)` within the range, increasing.
    pub fn j_l(&self, l: usize) -> Vec<i32> {
        self.iter().filter(|(_, c)| *c == ScaleClass::Dominated(l)).map(|(j, _)| j).collect()
    }

    fn tails_stable(&self) -> bool {
        let n = self.classes.len();
        n >= 20
            && self.classes[..10].iter().all(|c| *c != ScaleClass::Good)
            && self.classes[n - 10..].iter().all(|c| *c != ScaleClass::Good)
    }

    /// Each of `J_l ∩ [N, ∞)` and `J_l ∩ (-∞, -N]` is a run of consecutive
    /// integers.
    pub fn is_continuous(&self, l: usize) -> bool {
        let js = self.j_l(l);
        let contiguous = |v: Vec<i32>| v.windows(2).all(|w| w[1] == w[0] + 1);
        contiguous(js.iter().copied().filter(|&j| j > 0).collect()) && contiguous(js.iter().copied().filter(|&j| j < 0).collect())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let classes: Vec<serde_json::Value> =
            self.iter().map(|(j, c)| serde_json::json!({"j": j, "class": c.label()})).collect();
        serde_json::json!({"N": self.n_param, "classes": classes})
    }
}

/// Upper bound `(2(N+2d)+1) d (d-1) + (2N-1)` on `#J_good(N)`.
pub fn cardinality_bound(n_param: i32, d: usize) -> i64 {
    let n = n_param as i64;
    let d = d as i64;
    (2 * (n + 2 * d) + 1) * d * (d - 1) + (2 * n - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardinalityCheck {
    pub count: i64,
    pub bound: i64,
    pub ok: bool,
}

pub fn verify_cardinality_bound(partition: &ScalePartition, d: usize) -> Result<CardinalityCheck> {
    if !partition.tails_stable() {
        return Err(Error::RangeTooNarrow);
    }
    let count = partition.good().len() as i64;
    let bound = cardinality_bound(partition.n_param, d);
    Ok(CardinalityCheck { count, bound, ok: count <= bound })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftedScales {
    pub j_l: f64,
    pub j_star: Vec<i32>,
    pub e_intervals: Vec<DyadicInterval>,
}

/// `J*_l = {j : inf J_l <= j + j_l <= sup J_l}` and a dyadic cover of the
/// part of `∪_{J_l} [2^{-j-1}, 2^{-j+1}]` missed by the shifted family.
pub fn shifted_scale_set(partition: &ScalePartition, l: usize) -> Result<ShiftedScales> {
    let js = partition.j_l(l);
    if js.is_empty() {
        return Err(Error::Empty(format!("J_{l}")));
    }
    shifted_from(partition, l, &js)
}

/// Same as [`shifted_scale_set`] restricted to the positive part of `J_l`.
pub fn shifted_scale_set_positive(partition: &ScalePartition, l: usize) -> Result<ShiftedScales> {
    let js: Vec<i32> = partition.j_l(l).into_iter().filter(|&j| j > 0).collect();
    if js.is_empty() {
        return Err(Error::Empty(format!("J_{l},+")));
    }
    shifted_from(partition, l, &js)
}

fn shifted_from(partition: &ScalePartition, l: usize, js: &[i32]) -> Result<ShiftedScales> {
    let j_l = *partition.j_l_shifts.get(&l).ok_or_else(|| invalid(format!("a_{l} vanishes")))?;
    let lo = js[0] as f64;
    let hi = js[js.len() - 1] as f64;
    let first = (lo - j_l - GUARD).ceil() as i32;
    let last = (hi - j_l + GUARD).floor() as i32;
    let j_star: Vec<i32> = (first..=last).collect();

    let covered = merge(js.iter().map(|&j| band(j as f64)).collect());
    let shifted = merge(j_star.iter().map(|&j| band(j as f64 + j_l)).collect());
    let mut e_intervals = Vec::new();
    for piece in subtract(&covered, &shifted) {
        e_intervals.extend(dyadic_cover(piece.0, piece.1));
    }
    Ok(ShiftedScales { j_l, j_star, e_intervals })
}

fn band(s: f64) -> (f64, f64) {
    (2f64.powf(-s - 1.0), 2f64.powf(-s + 1.0))
}

fn merge(mut v: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (a, b) in v {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

fn subtract(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for &(lo, hi) in a {
        let mut pieces = vec![(lo, hi)];
        for &(c, d) in b {
            let mut next = Vec::new();
            for (x, y) in pieces {
                if d <= x || c >= y {
                    next.push((x, y));
                } else {
                    if c > x {
                        next.push((x, c));
                    }
                    if d < y {
                        next.push((d, y));
                    }
                }
            }
            pieces = next;
        }
        out.extend(pieces.into_iter().filter(|(x, y)| y - x > 1e-12 * y.abs().max(1e-300)));
    }
    out
}

/// At most three dyadic intervals of length `2^k <= b - a` covering `[a, b]`
/// (four when the alignment is unlucky).
fn dyadic_cover(a: f64, b: f64) -> Vec<DyadicInterval> {
    let k = -((b - a).log2().floor() as i32);
    let len = 2f64.powi(-k);
    let n0 = (a / len).floor() as i64;
    let n1 = (b / len).ceil() as i64;
    (n0..n1).map(|n| DyadicInterval { k, n }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn monomial_example() {
        let p = Polynomial::new(&[0.0, 1.0]);
        for n in [1, 5, 8, 10] {
            let part = classify_scales(&p, n, (-100, 100)).unwrap();
            assert_eq!(part.good().len() as i32, 2 * n - 1);
            assert!(part.j_l(2).iter().all(|j| j.abs() >= n));
        }
        let part = classify_scales(&p, 5, (-100, 100)).unwrap();
        let c = verify_cardinality_bound(&part, 2).unwrap();
        assert_eq!((c.count, c.bound, c.ok), (9, 47, true));
    }

    #[test]
    fn two_term_example() {
        let p = Polynomial::new(&[0.0, 1.0, 1.0]);
        let part = classify_scales(&p, 10, (-100, 100)).unwrap();
        assert_eq!(part.j_l(2), (17..=100).collect::<Vec<_>>());
        assert_eq!(part.j_l(3), (-100..=-17).collect::<Vec<_>>());
        assert_eq!(part.good().len(), 33);
        let c = verify_cardinality_bound(&part, 3).unwrap();
        assert_eq!((c.count, c.bound, c.ok), (33, 217, true));
        assert_eq!(cardinality_bound(10, 3), 217);
    }

    #[test]
    fn narrow_range_rejected() {
        let p = Polynomial::new(&[0.0, 1.0, 1.0]);
        let part = classify_scales(&p, 10, (-20, 20)).unwrap();
        assert_eq!(verify_cardinality_bound(&part, 3), Err(Error::RangeTooNarrow));
        assert!(classify_scales(&p, 10, (3, 2)).is_err());
    }

    #[test]
    fn json_shape() {
        let part = classify_scales(&Polynomial::new(&[0.0, 1.0]), 2, (-2, 2)).unwrap();
        let v = part.to_json();
        assert_eq!(v["N"], 2);
        assert_eq!(v["classes"][0]["class"], "l=2");
        assert_eq!(v["classes"][2]["class"], "good");
    }

    #[test]
    fn shifted_examples() {
        let part = classify_scales(&Polynomial::new(&[0.0, 1.0, 1.0]), 4, (-60, 60)).unwrap();
        let s = shifted_scale_set(&part, 2).unwrap();
        assert_eq!(s.j_l, 0.0);
        assert_eq!(s.j_star, part.j_l(2));
        assert!(s.e_intervals.is_empty());

        let part = classify_scales(&Polynomial::new(&[0.0, 2.0]), 4, (-60, 60)).unwrap();
        let s = shifted_scale_set_positive(&part, 2).unwrap();
        assert_eq!(s.j_l, 1.0);
        let expect: Vec<i32> = part.j_l(2).into_iter().filter(|&j| j > 0).map(|j| j - 1).collect();
        assert_eq!(s.j_star, expect);
        assert!(s.e_intervals.is_empty());

        let part = classify_scales(&Polynomial::new(&[0.0, 2f64.sqrt()]), 4, (-60, 60)).unwrap();
        let s = shifted_scale_set_positive(&part, 2).unwrap();
        assert!((s.j_l - 0.5).abs() < 1e-15);
        assert!(!s.e_intervals.is_empty());
        assert!(s.e_intervals.len() <= 4 * 2);
        for e in &s.e_intervals {
            assert!(e.len() > 0.0);
        }
    }

    fn random_poly() -> impl Strategy<Value = Polynomial> {
        (2usize..=6, prop::collection::vec((-60.0f64..60.0, any::<bool>(), any::<bool>()), 6)).prop_map(|(d, v)| {
            let mut a = vec![0.0; d];
            for k in 2..=d {
                let (b, sign, keep) = v[k - 1];
                if keep || k == d {
                    a[k - 1] = if sign { 1.0 } else { -1.0 } * 2f64.powf(b);
                }
            }
            Polynomial::new(&a)
        })
    }

    proptest! {
        #[test]
        fn sets_disjoint_and_continuous(p in random_poly(), n in 1i32..12) {
            let part = classify_scales_auto(&p, n).unwrap();
            for l in 2..=p.degree() {
                prop_assert!(part.is_continuous(l));
            }
            for (j, c) in part.iter() {
                if let ScaleClass::Dominated(_) = c {
                    prop_assert!(j.abs() >= n);
                }
            }
            prop_assert!(verify_cardinality_bound(&part, p.degree()).unwrap().ok);
        }

        #[test]
        fn scaling_covariance(p in random_poly(), s in -20i32..20) {
            let n = 8;
            let q = Polynomial::new(&(1..=p.degree()).map(|k| p.coeff(k) * 2f64.powi((1 - k as i32) * s)).collect::<Vec<_>>());
            let a = classify_scales(&p, n, (-400, 400)).unwrap();
            let b = classify_scales(&q, n, (-400, 400)).unwrap();
            for j in -300i32..=300 {
                if j.abs() >= n && (j + s).abs() >= n {
                    prop_assert_eq!(b.class_of(j), a.class_of(j + s));
                }
            }
        }
    }
}
