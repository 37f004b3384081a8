//! Exceptional sets, Whitney decompositions, tiles, trees, tree sizes and
//! greedy tree selection.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::report::ExperimentReport;
use crate::scales::{shifted_scale_set_positive, ScalePartition};
use crate::signals::{CutoffFamily, GridFunction};

/// `[n 2^{-k}, (n+1) 2^{-k}]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicInterval {
    pub k: i32,
    pub n: i64,
}

impl DyadicInterval {
    pub fn new(k: i32, n: i64) -> Self {
        Self { k, n }
    }

    pub fn len(&self) -> f64 {
        2f64.powi(-self.k)
    }

    pub fn lo(&self) -> f64 {
        self.n as f64 * self.len()
    }

    pub fn hi(&self) -> f64 {
        (self.n + 1) as f64 * self.len()
    }

    pub fn parent(&self) -> Self {
        Self { k: self.k - 1, n: self.n.div_euclid(2) }
    }

    pub fn children(&self) -> [Self; 2] {
        [Self { k: self.k + 1, n: 2 * self.n }, Self { k: self.k + 1, n: 2 * self.n + 1 }]
    }

    /// Dyadic containment (`other ⊆ self`).
    pub fn contains(&self, other: &Self) -> bool {
        other.k >= self.k && other.n >> (other.k - self.k) == self.n
    }

    pub fn disjoint(&self, other: &Self) -> bool {
        !self.contains(other) && !other.contains(self)
    }

    /// Smallest dyadic interval containing both.
    pub fn join(&self, other: &Self) -> Self {
        let (mut a, mut b) = (*self, *other);
        while a.k > b.k {
            a = a.parent();
        }
        while b.k > a.k {
            b = b.parent();
        }
        while a != b {
            a = a.parent();
            b = b.parent();
        }
        a
    }

    /// Order used for tie-breaking: leftmost, then coarsest.
    fn left_coarse_key(&self) -> (f64, i32) {
        (self.lo(), self.k)
    }
}

/// Finite union of disjoint open intervals, sorted.
pub type OpenSet = Vec<(f64, f64)>;

fn normalize(omega: &[(f64, f64)]) -> Result<OpenSet> {
    if omega.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(Error::Unbounded);
    }
    let mut v: Vec<(f64, f64)> = omega.iter().copied().filter(|(a, b)| b > a).collect();
    v.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: OpenSet = Vec::new();
    for (a, b) in v {
        match out.last_mut() {
            // open intervals sharing only an endpoint stay separate
            Some(last) if a < last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    Ok(out)
}

pub fn open_set_measure(omega: &[(f64, f64)]) -> f64 {
    omega.iter().map(|(a, b)| b - a).sum()
}

fn component_of(omega: &[(f64, f64)], x: f64) -> Option<(f64, f64)> {
    let i = omega.partition_point(|c| c.1 <= x);
    omega.get(i).copied().filter(|c| c.0 < x && x < c.1)
}

/// `dist(x, Ω^c)`.
pub fn dist_to_complement(omega: &[(f64, f64)], x: f64) -> f64 {
    component_of(omega, x).map_or(0.0, |(a, b)| (x - a).min(b - x))
}

fn check_indicator(f: &GridFunction) -> Result<f64> {
    if f.values.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(invalid("indicator must be 0/1 valued"));
    }
    let m = f.integral();
    if !(m > 0.0) {
        return Err(invalid("indicator must have positive measure"));
    }
    Ok(m)
}

/// `Ω = {M1_{F1} > C|F1|/|F3|} ∪ {M1_{F2} > C|F2|/|F3|}` as maximal runs of
/// grid cells `[x_i - h/2, x_i + h/2]`.
pub fn exceptional_set(f1: &GridFunction, f2: &GridFunction, f3: &GridFunction, c: f64) -> Result<OpenSet> {
    if !f1.same_grid(f2) || !f1.same_grid(f3) {
        return Err(invalid("indicators must share a grid"));
    }
    let (m1, m2, m3) = (check_indicator(f1)?, check_indicator(f2)?, check_indicator(f3)?);
    let (a, b) = (f1.hl_maximal(), f2.hl_maximal());
    let (t1, t2) = (c * m1 / m3, c * m2 / m3);
    let h = f1.step();
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..=f1.n {
        let inside = i < f1.n && (a.values[i] > t1 || b.values[i] > t2);
        match (inside, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((f1.x(s) - 0.5 * h, f1.x(i - 1) + 0.5 * h));
                start = None;
            }
            _ => {}
        }
    }
    Ok(out)
}

/// Default bound on the uncovered part of `Ω`, relative to `|Ω|`.
pub const WHITNEY_DEFECT: f64 = 1.0 / (1u64 << 44) as f64;

/// Dyadic intervals `J ⊆ Ω`, pairwise disjoint, with
/// `|J| <= dist(J, ∂Ω) <= 3|J|`, covering `Ω` up to `2^{-44}|Ω|` (or up to
/// the finest scale at which interval endpoints are exact in `f64`).
pub fn whitney_decompose(omega: &[(f64, f64)]) -> Result<Vec<DyadicInterval>> {
    whitney_decompose_with(omega, WHITNEY_DEFECT)
}

/// Maximal dyadic intervals with `dist(J, Ω^c) >= |J|`, found by recursive
/// subdivision from intervals longer than twice the hull of `Ω` and stopped
/// at the scale where the uncovered part near the boundary is below
/// `rel_defect |Ω|`.
pub fn whitney_decompose_with(omega: &[(f64, f64)], rel_defect: f64) -> Result<Vec<DyadicInterval>> {
    let omega = normalize(omega)?;
    if omega.is_empty() {
        return Ok(Vec::new());
    }
    if !(rel_defect > 0.0) {
        return Err(invalid("defect must be positive"));
    }
    let lo = omega[0].0;
    let hi = omega[omega.len() - 1].1;
    let measure = open_set_measure(&omega);
    // near each endpoint the uncovered length is below 4 2^{-k_max}
    let wanted = (8.0 * omega.len() as f64 / (rel_defect * measure)).log2().ceil() as i32 + 1;
    let exact = 52 - lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE).log2().ceil() as i32;
    let k_max = wanted.min(exact);
    let k0 = -((2.0 * (hi - lo)).log2().ceil() as i32);
    if k_max <= k0 {
        return Err(invalid("Ω too small relative to its position"));
    }
    let len0 = 2f64.powi(-k0);
    let mut stack: Vec<DyadicInterval> =
        ((lo / len0).floor() as i64..=(hi / len0).floor() as i64).map(|n| DyadicInterval::new(k0, n)).collect();
    let mut out = Vec::new();
    while let Some(j) = stack.pop() {
        let (a, b) = (j.lo(), j.hi());
        let i = omega.partition_point(|c| c.1 <= a);
        let Some(&(c0, c1)) = omega.get(i) else { continue };
        if c0 >= b {
            continue;
        }
        if c0 < a && b < c1 && (a - c0).min(c1 - b) >= j.len() {
            out.push(j);
        } else if j.k < k_max {
            stack.extend(j.children());
        }
    }
    out.sort_by(|x, y| x.lo().total_cmp(&y.lo()));
    Ok(out)
}

/// Checks on one Whitney family: disjointness, coverage defect and the
/// distance sandwich for each interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WhitneyChecks {
    pub disjoint: bool,
    pub coverage_defect: f64,
    pub sandwich_violations: usize,
}

pub fn whitney_checks(family: &[DyadicInterval], omega: &[(f64, f64)]) -> Result<WhitneyChecks> {
    let omega = normalize(omega)?;
    let mut sorted = family.to_vec();
    sorted.sort_by(|x, y| x.lo().total_cmp(&y.lo()));
    let disjoint = sorted.windows(2).all(|w| w[0].hi() <= w[1].lo());
    let covered: f64 = sorted.iter().map(|j| j.len()).sum();
    let mut sandwich_violations = 0;
    for j in &sorted {
        let inside = component_of(&omega, 0.5 * (j.lo() + j.hi()));
        let ok = match inside {
            Some((a, b)) if a < j.lo() && j.hi() < b => {
                let d = (j.lo() - a).min(b - j.hi());
                d >= j.len() && d <= 3.0 * j.len()
            }
            _ => false,
        };
        if !ok {
            sandwich_violations += 1;
        }
    }
    Ok(WhitneyChecks { disjoint, coverage_defect: open_set_measure(&omega) - covered, sandwich_violations })
}

/// Far pairs need `dist(I1, I2) >= FAR_FACTOR · min(|I1|, |I2|)`.
pub const FAR_FACTOR: f64 = 100.0;
pub const FAR_CONSTANT: f64 = 95.0 / 98.0;
pub const NEAR_RATIO_BOUND: f64 = 2000.0;

/// Random pairs from the family: far pairs are checked against
/// `|a - b| >= (95/98) dist(a, Ω^c)`, near pairs against
/// `max(|I1|,|I2|) / min <= 2000`.
pub fn whitney_pair_properties(family: &[DyadicInterval], omega: &[(f64, f64)], pairs: usize, seed: u64) -> Result<ExperimentReport> {
    let omega = normalize(omega)?;
    let checks = whitney_checks(family, &omega)?;
    let mut report = ExperimentReport::new("whitney", &["k1", "n1", "k2", "n2", "kind", "value", "ok"]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_far = f64::INFINITY;
    let mut worst_near = 1.0_f64;
    let (mut far_bad, mut near_bad) = (0usize, 0usize);
    if family.len() >= 2 {
        for _ in 0..pairs {
            let i1 = family[rng.gen_range(0..family.len())];
            let i2 = family[rng.gen_range(0..family.len())];
            if i1 == i2 {
                continue;
            }
            let gap = (i1.lo() - i2.hi()).max(i2.lo() - i1.hi()).max(0.0);
            let small = i1.len().min(i2.len());
            let (kind, value, ok) = if gap >= FAR_FACTOR * small {
                let a = rng.gen_range(i1.lo()..i1.hi());
                let b = rng.gen_range(i2.lo()..i2.hi());
                let ratio = (a - b).abs() / dist_to_complement(&omega, a);
                worst_far = worst_far.min(ratio);
                let ok = ratio >= FAR_CONSTANT;
                far_bad += usize::from(!ok);
                ("far", ratio, ok)
            } else {
                let ratio = i1.len().max(i2.len()) / small;
                worst_near = worst_near.max(ratio);
                let ok = ratio <= NEAR_RATIO_BOUND;
                near_bad += usize::from(!ok);
                ("near", ratio, ok)
            };
            report.push_row(vec![i1.k.into(), i1.n.into(), i2.k.into(), i2.n.into(), kind.into(), value.into(), ok.into()]);
        }
    }
    let measure = open_set_measure(&omega);
    report.fit("worst_far_ratio", worst_far);
    report.fit("worst_near_ratio", worst_near);
    report.fit("coverage_defect", checks.coverage_defect);
    report.fit("far_violations", far_bad as f64);
    report.fit("near_violations", near_bad as f64);
    report.flag("disjoint", checks.disjoint, true);
    report.flag("coverage", checks.coverage_defect <= 2f64.powi(-30) * measure, true);
    report.flag("sandwich", checks.sandwich_violations == 0, true);
    report.flag("far_pairs", far_bad == 0, true);
    report.flag("near_pairs", near_bad == 0, true);
    Ok(report)
}

/// Random open set: union of up to `max_parts` random subintervals of `[0, 1]`.
pub fn random_open_set<R: Rng>(rng: &mut R, max_parts: usize) -> OpenSet {
    let parts = rng.gen_range(1..=max_parts);
    let raw: Vec<(f64, f64)> = (0..parts)
        .map(|_| {
            let a: f64 = rng.gen();
            let b: f64 = rng.gen();
            (a.min(b), a.max(b))
        })
        .collect();
    normalize(&raw).unwrap_or_default()
}

/// Scale `j` and position `n` with interval `I_{n,l,j}` at scale `j_l + j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tile {
    pub j: i32,
    pub n: i64,
    pub interval: DyadicInterval,
}

impl Tile {
    pub fn new(j: i32, n: i64, jl: i32) -> Self {
        Self { j, n, interval: DyadicInterval::new(jl + j, n) }
    }

    /// The rounded shift `j_l`.
    pub fn jl(&self) -> i32 {
        self.interval.k - self.j
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileSet {
    pub l: usize,
    pub m: i32,
    /// `j_l` rounded to the nearest integer.
    pub jl: i32,
    pub tiles: Vec<Tile>,
}

/// Tiles `(j, n)`, `j ∈ J*_{l,+}`, whose intervals overlap `x_range`.
pub fn build_tiles(partition: &ScalePartition, l: usize, m: i32, x_range: (f64, f64)) -> Result<TileSet> {
    let (x0, x1) = x_range;
    if !(x1 > x0) || !x0.is_finite() || !x1.is_finite() {
        return Err(invalid("x_range must be a bounded interval"));
    }
    let shifted = shifted_scale_set_positive(partition, l)?;
    let jl = shifted.j_l.round() as i32;
    let mut tiles = Vec::new();
    for &j in &shifted.j_star {
        tiles.extend(tiles_at(j, jl, x_range));
    }
    Ok(TileSet { l, m, jl, tiles })
}

fn tiles_at(j: i32, jl: i32, (x0, x1): (f64, f64)) -> Vec<Tile> {
    let len = 2f64.powi(-(jl + j));
    let first = (x0 / len).floor() as i64;
    let last = (x1 / len).ceil() as i64 - 1;
    (first..=last).map(|n| Tile::new(j, n, jl)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub tiles: Vec<Tile>,
    pub top: DyadicInterval,
}

impl Tree {
    /// Tree with the minimal dyadic top containing every tile interval.
    pub fn new(tiles: Vec<Tile>) -> Result<Self> {
        let top = tiles
            .iter()
            .map(|t| t.interval)
            .reduce(|a, b| a.join(&b))
            .ok_or_else(|| Error::Empty("tree".into()))?;
        Ok(Self { tiles, top })
    }

    pub fn is_valid(&self) -> bool {
        !self.tiles.is_empty()
            && self.tiles.iter().all(|t| self.top.contains(&t.interval))
            && Tree::new(self.tiles.clone()).map(|t| t.top == self.top).unwrap_or(false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Which {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

impl Which {
    pub fn from_index(k: u8) -> Result<Self> {
        match k {
            1 => Ok(Which::One),
            2 => Ok(Which::Two),
            _ => Err(invalid("size index must be 1 or 2")),
        }
    }
}

/// Weights `ψ_s` in the sizes: identically one, or the mollified indicator
/// `1_{Ω^c} ∗ θ_s` of the complement of an exceptional set.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum PsiWeights {
    #[default]
    Unit,
    Exceptional(OpenSet),
}

/// Tail exponent in `1**`.
pub const TAIL_K: i32 = 10;

/// `1**_{n,l,j}(x) = ∫_I 2^s (1 + 2^s|x-y|)^{-K} dy` in closed form.
pub fn one_star_star(interval: &DyadicInterval, s: i32, k: i32, x: f64) -> f64 {
    let kk = k as f64;
    let g = |u: f64| u.signum() * (1.0 - (1.0 + u.abs()).powf(1.0 - kk)) / (kk - 1.0);
    let sc = 2f64.powi(s);
    g(sc * (x - interval.lo())) - g(sc * (x - interval.hi()))
}

/// Settings shared by every size evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeParams {
    pub which: Which,
    pub p: f64,
    pub l: usize,
    pub m: i32,
    pub psi: PsiWeights,
    /// Use all three 1-size summands (otherwise only the first).
    pub three_summands: bool,
}

impl SizeParams {
    pub fn new(which: Which, p: f64, l: usize, m: i32) -> Self {
        Self { which, p, l, m, psi: PsiWeights::Unit, three_summands: true }
    }

    fn data_scale(&self, t: &Tile) -> i32 {
        match self.which {
            Which::One => t.jl() + t.j + self.m,
            Which::Two => t.jl() + self.l as i32 * t.j + self.m,
        }
    }

    fn kernel_scale(&self, t: &Tile) -> i32 {
        t.jl() + t.j + self.m
    }

    fn summands(&self) -> usize {
        match (self.which, self.three_summands) {
            (Which::One, true) => 3,
            _ => 1,
        }
    }
}

/// Per-scale convolutions `data ∗ Φ_s`, `data ∗ (DΦ)_s`, `ψ_s`, `(Dψ)_s`.
struct Pieces {
    phi: GridFunction,
    dphi: GridFunction,
    psi: Option<(GridFunction, GridFunction)>,
}

fn pieces(data: &GridFunction, s: i32, params: &SizeParams, family: &CutoffFamily) -> Result<Pieces> {
    let phi = data.littlewood_paley_piece(s as f64, family)?;
    let scale = 2f64.powi(-s);
    let two_pi = 2.0 * std::f64::consts::PI;
    let dphi = data.fourier_multiplier(|xi| Complex64::new(0.0, two_pi * xi * scale) * family.phi_hat(xi * scale));
    let psi = match &params.psi {
        PsiWeights::Unit => None,
        PsiWeights::Exceptional(omega) => {
            let comp = GridFunction::from_fn(data.lo, data.hi, data.n, |x| if component_of(omega, x).is_some() { 0.0 } else { 1.0 })?;
            let w = comp.fourier_multiplier(|xi| Complex64::new(family.theta(xi * scale), 0.0));
            let dw = comp.fourier_multiplier(|xi| Complex64::new(0.0, two_pi * xi * scale) * family.theta(xi * scale));
            Some((w, dw))
        }
    };
    Ok(Pieces { phi, dphi, psi })
}

fn all_pieces<'a, I: Iterator<Item = &'a Tile>>(
    tiles: I,
    data: &GridFunction,
    params: &SizeParams,
    family: &CutoffFamily,
) -> Result<BTreeMap<i32, Pieces>> {
    let mut out = BTreeMap::new();
    for t in tiles {
        let s = params.data_scale(t);
        if !out.contains_key(&s) {
            out.insert(s, pieces(data, s, params, family)?);
        }
    }
    Ok(out)
}

fn trapezoid_lp(values: &[f64], h: f64, p: f64) -> f64 {
    let n = values.len();
    let s: f64 = values
        .iter()
        .enumerate()
        .map(|(i, v)| if i == 0 || i + 1 == n { 0.5 } else { 1.0 } * h * v.abs().powf(p))
        .sum();
    s.powf(1.0 / p)
}

/// k-size of a tree: `|I_T|^{-1/p}` times the sum of the `L^p` norms of the
/// square functions, each tile weighted by `1**` with tail exponent 10.
pub fn tree_size(tree: &Tree, data: &GridFunction, params: &SizeParams, family: &CutoffFamily) -> Result<f64> {
    if tree.tiles.is_empty() {
        return Err(Error::Empty("tree".into()));
    }
    if !(params.p > 1.0) {
        return Err(invalid("p must exceed 1"));
    }
    let pcs = all_pieces(tree.tiles.iter(), data, params, family)?;
    let weight = |t: &Tile, _: usize, x: f64| one_star_star(&t.interval, params.kernel_scale(t), TAIL_K, x);
    Ok(tree_size_from(tree, data, params, &pcs, &weight))
}

fn tree_size_from(
    tree: &Tree,
    data: &GridFunction,
    params: &SizeParams,
    pcs: &BTreeMap<i32, Pieces>,
    weight: &dyn Fn(&Tile, usize, f64) -> f64,
) -> f64 {
    let xs = data.xs();
    let mut sq = vec![vec![0.0; data.n]; 3];
    for t in &tree.tiles {
        let pc = &pcs[&params.data_scale(t)];
        for (i, &x) in xs.iter().enumerate() {
            let w = weight(t, i, x);
            let psi = pc.psi.as_ref().map_or(1.0, |(p, _)| p.values[i]);
            sq[0][i] += (w * psi * pc.phi.values[i]).powi(2);
            if params.summands() == 3 {
                sq[1][i] += (w * psi * pc.dphi.values[i]).powi(2);
                let dpsi = pc.psi.as_ref().map_or(0.0, |(_, d)| d.values[i]);
                sq[2][i] += (w * dpsi * pc.phi.values[i]).powi(2);
            }
        }
    }
    let h = data.step();
    let total: f64 = sq[..params.summands()]
        .iter()
        .map(|s| trapezoid_lp(&s.iter().map(|v| v.sqrt()).collect::<Vec<_>>(), h, params.p))
        .sum();
    total * tree.top.len().powf(-1.0 / params.p)
}

/// `size_k(U)`: the largest k-size over trees in `U`, attained by taking
/// every tile of `U` inside each candidate top.
pub fn set_size(tiles: &[Tile], data: &GridFunction, params: &SizeParams, family: &CutoffFamily) -> Result<f64> {
    if tiles.is_empty() {
        return Ok(0.0);
    }
    let mut engine = SizeEngine::new(tiles, data, params, family)?;
    Ok(engine.best().map_or(0.0, |(_, s)| s))
}

/// Bottom-up square sums over the dyadic ancestors of a tile set.
struct SizeEngine {
    tiles: Vec<Tile>,
    contrib: Vec<Vec<Vec<f64>>>,
    nodes: BTreeMap<DyadicInterval, Node>,
    h: f64,
    p: f64,
}

struct Node {
    own: BTreeSet<usize>,
    count: usize,
    sums: Vec<Vec<f64>>,
    size: Option<f64>,
}

impl SizeEngine {
    fn new(tiles: &[Tile], data: &GridFunction, params: &SizeParams, family: &CutoffFamily) -> Result<Self> {
        if !(params.p > 1.0) {
            return Err(invalid("p must exceed 1"));
        }
        let pcs = all_pieces(tiles.iter(), data, params, family)?;
        let xs = data.xs();
        let ns = params.summands();
        let contrib: Vec<Vec<Vec<f64>>> = tiles
            .iter()
            .map(|t| {
                let pc = &pcs[&params.data_scale(t)];
                let ks = params.kernel_scale(t);
                let mut c = vec![vec![0.0; data.n]; ns];
                for (i, &x) in xs.iter().enumerate() {
                    let w = one_star_star(&t.interval, ks, TAIL_K, x);
                    let psi = pc.psi.as_ref().map_or(1.0, |(p, _)| p.values[i]);
                    c[0][i] = (w * psi * pc.phi.values[i]).powi(2);
                    if ns == 3 {
                        c[1][i] = (w * psi * pc.dphi.values[i]).powi(2);
                        let dpsi = pc.psi.as_ref().map_or(0.0, |(_, d)| d.values[i]);
                        c[2][i] = (w * dpsi * pc.phi.values[i]).powi(2);
                    }
                }
                c
            })
            .collect();
        let root = tiles.iter().map(|t| t.interval).reduce(|a, b| a.join(&b)).ok_or_else(|| Error::Empty("tiles".into()))?;
        let mut nodes: BTreeMap<DyadicInterval, Node> = BTreeMap::new();
        for (i, t) in tiles.iter().enumerate() {
            let mut d = t.interval;
            nodes.entry(d).or_insert_with(|| Node::empty(ns, data.n)).own.insert(i);
            while d != root {
                d = d.parent();
                nodes.entry(d).or_insert_with(|| Node::empty(ns, data.n));
            }
        }
        let mut engine = Self { tiles: tiles.to_vec(), contrib, nodes, h: data.step(), p: params.p };
        let mut keys: Vec<DyadicInterval> = engine.nodes.keys().copied().collect();
        keys.sort_by(|a, b| b.k.cmp(&a.k));
        for k in keys {
            engine.refresh(k);
        }
        Ok(engine)
    }

    /// Recomputes one node from its own tiles and its children.
    fn refresh(&mut self, key: DyadicInterval) {
        let kids = key.children();
        let ns = self.contrib.first().map_or(1, |c| c.len());
        let n = self.contrib.first().map_or(0, |c| c[0].len());
        let mut sums = vec![vec![0.0; n]; ns];
        let mut count = 0;
        let mut nonempty_kids = 0;
        for kid in &kids {
            if let Some(node) = self.nodes.get(kid) {
                if node.count > 0 {
                    nonempty_kids += 1;
                    count += node.count;
                    for (s, ks) in sums.iter_mut().zip(&node.sums) {
                        for (a, b) in s.iter_mut().zip(ks) {
                            *a += b;
                        }
                    }
                }
            }
        }
        let node = self.nodes.get(&key).expect("node exists");
        for &i in &node.own {
            for (s, cs) in sums.iter_mut().zip(&self.contrib[i]) {
                for (a, b) in s.iter_mut().zip(cs) {
                    *a += b;
                }
            }
        }
        count += node.own.len();
        let is_top = !node.own.is_empty() || nonempty_kids == 2;
        let size = if is_top {
            let total: f64 = sums
                .iter()
                .map(|s| trapezoid_lp(&s.iter().map(|v| v.sqrt()).collect::<Vec<_>>(), self.h, self.p))
                .sum();
            Some(total * key.len().powf(-1.0 / self.p))
        } else {
            None
        };
        let node = self.nodes.get_mut(&key).expect("node exists");
        node.sums = sums;
        node.count = count;
        node.size = size;
    }

    fn best(&mut self) -> Option<(DyadicInterval, f64)> {
        self.nodes
            .iter()
            .filter_map(|(k, n)| n.size.map(|s| (*k, s)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// First top, leftmost then coarsest, whose tree beats `threshold`.
    fn first_above(&self, threshold: f64) -> Option<DyadicInterval> {
        self.nodes
            .iter()
            .filter(|(_, n)| n.size.is_some_and(|s| s > threshold))
            .map(|(k, _)| *k)
            .min_by(|a, b| a.left_coarse_key().partial_cmp(&b.left_coarse_key()).expect("finite"))
    }

    /// Removes every remaining tile inside `top` and returns them.
    fn take(&mut self, top: DyadicInterval) -> Vec<Tile> {
        let mut taken = Vec::new();
        let inside: Vec<DyadicInterval> = self.nodes.keys().copied().filter(|k| top.contains(k)).collect();
        for k in &inside {
            let node = self.nodes.get_mut(k).expect("node exists");
            for &i in &node.own {
                taken.push(self.tiles[i]);
            }
            node.own.clear();
            node.count = 0;
            node.size = None;
            for s in node.sums.iter_mut() {
                s.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let mut d = top;
        loop {
            let parent = d.parent();
            if !self.nodes.contains_key(&parent) {
                break;
            }
            self.refresh(parent);
            d = parent;
        }
        taken.sort();
        taken
    }

    fn remaining(&self) -> Vec<Tile> {
        let mut v: Vec<Tile> = self.nodes.values().flat_map(|n| n.own.iter().map(|&i| self.tiles[i])).collect();
        v.sort();
        v
    }
}

impl Node {
    fn empty(ns: usize, n: usize) -> Self {
        Self { own: BTreeSet::new(), count: 0, sums: vec![vec![0.0; n]; ns], size: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub forest: Vec<Tree>,
    pub residual: Vec<Tile>,
    /// `size_k(S)` before selection.
    pub initial_size: f64,
    /// `(1/2)^{1/p} size_k(S)`.
    pub threshold: f64,
    pub residual_size: f64,
}

/// Repeatedly removes the maximal tree under the first qualifying top
/// (leftmost, then coarsest) while some tree's k-size exceeds
/// `(1/2)^{1/p} size_k(S)`.
pub fn greedy_tree_selection(tiles: &[Tile], data: &GridFunction, params: &SizeParams, family: &CutoffFamily) -> Result<Selection> {
    if tiles.is_empty() {
        return Ok(Selection { forest: Vec::new(), residual: Vec::new(), initial_size: 0.0, threshold: 0.0, residual_size: 0.0 });
    }
    let mut engine = SizeEngine::new(tiles, data, params, family)?;
    let initial_size = engine.best().map_or(0.0, |(_, s)| s);
    let threshold = 0.5f64.powf(1.0 / params.p) * initial_size;
    let mut forest = Vec::new();
    while let Some(top) = engine.first_above(threshold) {
        let taken = engine.take(top);
        forest.push(Tree { tiles: taken, top });
    }
    let residual_size = engine.best().map_or(0.0, |(_, s)| s);
    Ok(Selection { forest, residual: engine.remaining(), initial_size, threshold, residual_size })
}

/// `M_p f = (M|f|^p)^{1/p}` on the grid.
pub fn maximal_p(data: &GridFunction, p: f64) -> GridFunction {
    data.map(|v| v.abs().powf(p)).hl_maximal().map(|v| v.powf(1.0 / p))
}

/// Postconditions of a selection, with sizes recomputed tree by tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionChecks {
    pub residual_halved: bool,
    pub tops_disjoint: bool,
    pub containment: bool,
    pub trees_above_threshold: bool,
    pub recomputed_residual_size: f64,
    /// `Σ|I_T| size^p / ∫|data|^p`.
    pub packing_constant: f64,
}

pub fn check_selection(
    all: &[Tile],
    sel: &Selection,
    data: &GridFunction,
    params: &SizeParams,
    family: &CutoffFamily,
) -> Result<SelectionChecks> {
    let rel = 1e-12;
    let initial = brute_set_size(all, data, params, family)?;
    let threshold = 0.5f64.powf(1.0 / params.p) * initial;
    let recomputed_residual_size = brute_set_size(&sel.residual, data, params, family)?;
    let residual_halved = recomputed_residual_size <= threshold * (1.0 + rel);
    let mut trees_above_threshold = true;
    for t in &sel.forest {
        let tree = Tree::new(t.tiles.clone())?;
        trees_above_threshold &= tree.top == t.top && tree_size(&tree, data, params, family)? > threshold * (1.0 - rel);
    }
    let tops_disjoint = sel
        .forest
        .iter()
        .enumerate()
        .all(|(i, a)| sel.forest[i + 1..].iter().all(|b| a.top.disjoint(&b.top)));
    let mp = maximal_p(data, params.p);
    let xs = data.xs();
    let containment = sel.forest.iter().all(|t| {
        let (lo, hi) = (t.top.lo(), t.top.hi());
        let inside: Vec<f64> = xs.iter().zip(&mp.values).filter(|(x, _)| **x >= lo && **x <= hi).map(|(_, v)| *v).collect();
        let vals = if inside.is_empty() { vec![mp.eval(0.5 * (lo + hi))] } else { inside };
        vals.iter().all(|&v| v >= threshold * (1.0 - rel))
    });
    let mass = data.map(|v| v.abs().powf(params.p)).integral();
    let tops: f64 = sel.forest.iter().map(|t| t.top.len()).sum();
    let packing_constant = if mass > 0.0 { tops * initial.powf(params.p) / mass } else { 0.0 };
    Ok(SelectionChecks { residual_halved, tops_disjoint, containment, trees_above_threshold, recomputed_residual_size, packing_constant })
}

/// `size_k(U)` by enumerating every dyadic ancestor of the tile intervals
/// and evaluating [`tree_size`] on the tiles it contains.
pub fn brute_set_size(tiles: &[Tile], data: &GridFunction, params: &SizeParams, family: &CutoffFamily) -> Result<f64> {
    if tiles.is_empty() {
        return Ok(0.0);
    }
    let root = tiles.iter().map(|t| t.interval).reduce(|a, b| a.join(&b)).expect("nonempty");
    let mut cands = BTreeSet::new();
    for t in tiles {
        let mut d = t.interval;
        cands.insert(d);
        while d != root {
            d = d.parent();
            cands.insert(d);
        }
    }
    if !(params.p > 1.0) {
        return Err(invalid("p must exceed 1"));
    }
    let pcs = all_pieces(tiles.iter(), data, params, family)?;
    let xs = data.xs();
    let table: BTreeMap<Tile, Vec<f64>> = tiles
        .iter()
        .map(|t| (*t, xs.iter().map(|&x| one_star_star(&t.interval, params.kernel_scale(t), TAIL_K, x)).collect()))
        .collect();
    let weight = |t: &Tile, i: usize, _: f64| table[t][i];
    let mut best = 0.0_f64;
    for c in cands {
        let members: Vec<Tile> = tiles.iter().copied().filter(|t| c.contains(&t.interval)).collect();
        let tree = Tree::new(members)?;
        if tree.top == c {
            best = best.max(tree_size_from(&tree, data, params, &pcs, &weight));
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileJson {
    pub j: i32,
    pub n: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeJson {
    pub top: DyadicInterval,
    pub tiles: Vec<TileJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestJson {
    pub jl: i32,
    pub trees: Vec<TreeJson>,
    pub residual: Vec<TileJson>,
}

impl ForestJson {
    pub fn new(jl: i32, sel: &Selection) -> Self {
        let tj = |t: &Tile| TileJson { j: t.j, n: t.n };
        Self {
            jl,
            trees: sel.forest.iter().map(|t| TreeJson { top: t.top, tiles: t.tiles.iter().map(tj).collect() }).collect(),
            residual: sel.residual.iter().map(tj).collect(),
        }
    }
}

/// Random subset of the tiles over `[0, 1]` at scales `j0, j0+1, j0+2`
/// (with `j_l = 0`), at most `max_tiles` of them.
pub fn random_tile_set<R: Rng>(rng: &mut R, j0: i32, max_tiles: usize) -> Vec<Tile> {
    let mut all: Vec<Tile> = (j0..j0 + 3).flat_map(|j| tiles_at(j, 0, (0.0, 1.0))).collect();
    let keep = rng.gen_range(0.2..1.0);
    all.retain(|_| rng.gen_bool(keep));
    while all.len() > max_tiles {
        let i = rng.gen_range(0..all.len());
        all.swap_remove(i);
    }
    if all.is_empty() {
        all.push(Tile::new(j0, 0, 0));
    }
    all.sort();
    all
}

/// Random indicator of a union of up to four subintervals of `[0, 1]` on
/// the grid `[-1, 2]`.
pub fn random_indicator<R: Rng>(rng: &mut R, n: usize) -> Result<GridFunction> {
    let set = random_open_set(rng, 4);
    GridFunction::from_fn(-1.0, 2.0, n, |x| if component_of(&set, x).is_some() { 1.0 } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomials::Polynomial;
    use crate::scales::classify_scales;
    use proptest::prelude::*;

    #[test]
    fn dyadic_join_and_nesting() {
        let a = DyadicInterval::new(3, 5);
        let b = DyadicInterval::new(4, 12);
        assert_eq!(a.join(&b), DyadicInterval::new(1, 1));
        assert!(a.join(&b).contains(&a) && a.join(&b).contains(&b));
        let neg = DyadicInterval::new(2, -1);
        assert_eq!(neg.parent(), DyadicInterval::new(1, -1));
    }

    #[test]
    fn exceptional_examples() {
        let f = GridFunction::indicator(-2.0, 3.0, 501, 0.0, 1.0).unwrap();
        assert!(exceptional_set(&f, &f, &f, 10.0).unwrap().is_empty());
        let om = exceptional_set(&f, &f, &f, 0.5).unwrap();
        assert!(om.iter().any(|&(a, b)| a <= 0.0 && b >= 1.0));
        let bad = f.map(|v| 0.5 * v);
        assert!(exceptional_set(&bad, &f, &f, 1.0).is_err());
    }

    #[test]
    fn exceptional_set_small_for_large_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let f1 = random_indicator(&mut rng, 1024).unwrap();
            let f2 = random_indicator(&mut rng, 1024).unwrap();
            let f3 = random_indicator(&mut rng, 1024).unwrap();
            let om = exceptional_set(&f1, &f2, &f3, 8.0).unwrap();
            assert!(open_set_measure(&om) < f3.integral() / 2.0);
        }
    }

    #[test]
    fn whitney_examples() {
        let f = whitney_decompose(&[(0.0, 1.0)]).unwrap();
        let c = whitney_checks(&f, &[(0.0, 1.0)]).unwrap();
        assert!(c.disjoint && c.sandwich_violations == 0);
        assert!(c.coverage_defect.abs() <= 2f64.powi(-40));
        assert!(whitney_decompose(&[]).unwrap().is_empty());
        let two = [(0.0, 1.0), (2.0, 3.0)];
        let f = whitney_decompose(&two).unwrap();
        assert!(f.iter().all(|j| j.hi() <= 1.0 || j.lo() >= 2.0));
        assert!(whitney_checks(&f, &two).unwrap().sandwich_violations == 0);
        assert_eq!(whitney_decompose(&[(0.0, f64::INFINITY)]), Err(Error::Unbounded));
    }

    #[test]
    fn whitney_far_pair_at_opposite_ends() {
        let om = [(0.0, 1.0)];
        let f = whitney_decompose(&om).unwrap();
        let (i1, i2) = (f[0], f[f.len() - 1]);
        let a = 0.5 * (i1.lo() + i1.hi());
        let b = 0.5 * (i2.lo() + i2.hi());
        assert!((a - b).abs() >= FAR_CONSTANT * dist_to_complement(&om, a));
        let r = whitney_pair_properties(&f, &om, 500, 1).unwrap();
        assert!(r.flags["near_pairs"] && r.flags["sandwich"] && r.flags["coverage"]);
    }

    #[test]
    fn tiles_examples() {
        let p = Polynomial::new(&[0.0, 1.0, 1.0]);
        let part = classify_scales(&p, 8, (-16, 18)).unwrap();
        let ts = build_tiles(&part, 2, 0, (0.0, 1.0 / 1024.0)).unwrap();
        assert!(!ts.tiles.is_empty());
        for a in &ts.tiles {
            for b in &ts.tiles {
                assert!(a.interval.contains(&b.interval) || b.interval.contains(&a.interval) || a.interval.disjoint(&b.interval));
                if b.j == a.j + 1 {
                    let parents = ts.tiles.iter().filter(|c| c.j == a.j && c.interval.contains(&b.interval)).count();
                    assert!(parents <= 1);
                }
            }
        }
        let one = tiles_at(3, 0, (0.125, 0.25));
        assert_eq!(one.len(), 1);
        assert_eq!(tiles_at(3, 0, (0.1, 0.225)).len(), 2);
        assert_eq!(tiles_at(4, 0, (0.0, 1.0)).len(), 2 * tiles_at(3, 0, (0.0, 1.0)).len());
    }

    fn smooth_data() -> GridFunction {
        GridFunction::from_fn(-1.0, 2.0, 2048, |x| (-(x - 0.4) * (x - 0.4) * 20.0).exp() * (40.0 * std::f64::consts::PI * x).sin()).unwrap()
    }

    #[test]
    fn size_examples() {
        let fam = CutoffFamily::new();
        let params = SizeParams::new(Which::One, 2.0, 2, 0);
        let tree = Tree::new(vec![Tile::new(4, 3, 0)]).unwrap();
        let zero = GridFunction::zeros(-1.0, 2.0, 2048).unwrap();
        assert_eq!(tree_size(&tree, &zero, &params, &fam).unwrap(), 0.0);
        let f = smooth_data();
        let s = tree_size(&tree, &f, &params, &fam).unwrap();
        let s3 = tree_size(&tree, &f.map(|v| -3.0 * v), &params, &fam).unwrap();
        assert!((s3 - 3.0 * s).abs() < 1e-12 * s3);
        assert!(Tree::new(vec![]).is_err());
    }

    #[test]
    fn size_monotone_under_subtrees() {
        let fam = CutoffFamily::new();
        let f = smooth_data();
        let params = SizeParams::new(Which::One, 2.0, 2, 0);
        let full = Tree::new(vec![Tile::new(3, 2, 0), Tile::new(4, 4, 0), Tile::new(4, 5, 0), Tile::new(5, 11, 0)]).unwrap();
        let sub = Tree { tiles: vec![Tile::new(3, 2, 0), Tile::new(5, 11, 0)], top: full.top };
        assert!(tree_size(&sub, &f, &params, &fam).unwrap() <= tree_size(&full, &f, &params, &fam).unwrap());
    }

    #[test]
    fn engine_matches_brute_force() {
        let fam = CutoffFamily::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for which in [Which::One, Which::Two] {
            let data = random_indicator(&mut rng, 4096).unwrap();
            let tiles = random_tile_set(&mut rng, 2, 40);
            let params = SizeParams::new(which, 2.0, 2, 0);
            let a = set_size(&tiles, &data, &params, &fam).unwrap();
            let b = brute_set_size(&tiles, &data, &params, &fam).unwrap();
            assert!((a - b).abs() <= 1e-12 * b, "{a} {b}");
        }
    }

    #[test]
    fn greedy_examples() {
        let fam = CutoffFamily::new();
        let f = smooth_data();
        let params = SizeParams::new(Which::One, 2.0, 2, 0);
        let one = vec![Tile::new(4, 6, 0)];
        let sel = greedy_tree_selection(&one, &f, &params, &fam).unwrap();
        assert_eq!(sel.forest.len(), 1);
        assert!(sel.residual.is_empty());
        let zero = GridFunction::zeros(-1.0, 2.0, 2048).unwrap();
        let many = random_tile_set(&mut ChaCha8Rng::seed_from_u64(2), 3, 50);
        let sel = greedy_tree_selection(&many, &zero, &params, &fam).unwrap();
        assert!(sel.forest.is_empty());
        assert_eq!(sel.residual, many);
        let empty = greedy_tree_selection(&[], &f, &params, &fam).unwrap();
        assert!(empty.forest.is_empty() && empty.residual.is_empty());
    }

    #[test]
    fn greedy_postconditions_small_suite() {
        let fam = CutoffFamily::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for run in 0..10 {
            let which = if run % 2 == 0 { Which::One } else { Which::Two };
            let j0 = if which == Which::One { 4 } else { 2 };
            let data = random_indicator(&mut rng, 4096).unwrap();
            let tiles = random_tile_set(&mut rng, j0, 200);
            let params = SizeParams::new(which, 2.0, 2, 0);
            let sel = greedy_tree_selection(&tiles, &data, &params, &fam).unwrap();
            let c = check_selection(&tiles, &sel, &data, &params, &fam).unwrap();
            assert!(c.residual_halved && c.tops_disjoint && c.trees_above_threshold, "{c:?}");
            assert!(c.containment, "{c:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn whitney_properties(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let om = random_open_set(&mut rng, 8);
            let f = whitney_decompose(&om).unwrap();
            let r = whitney_pair_properties(&f, &om, 64, seed).unwrap();
            prop_assert!(r.flags["disjoint"] && r.flags["sandwich"] && r.flags["coverage"] && r.flags["near_pairs"]);
        }

        #[test]
        fn tile_intervals_nested_or_disjoint(seed in any::<u64>()) {
            let tiles = random_tile_set(&mut ChaCha8Rng::seed_from_u64(seed), 1, 60);
            for a in &tiles {
                for b in &tiles {
                    prop_assert!(a.interval.contains(&b.interval) || b.interval.contains(&a.interval) || a.interval.disjoint(&b.interval));
                    let (x0, x1) = (a.interval.lo().max(b.interval.lo()), a.interval.hi().min(b.interval.hi()));
                    if a.interval.disjoint(&b.interval) {
                        prop_assert!(x1 <= x0);
                    }
                }
            }
        }
    }
}
