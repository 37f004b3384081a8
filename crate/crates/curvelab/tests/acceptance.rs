//! Acceptance suite. Runs every criterion, prints one line each and exits
//! nonzero when any of them fails. Pass criterion numbers as arguments to run
//! a subset, e.g. `cargo test --test acceptance -- 3 9`.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use curvelab::operators::{apply_tj, apply_tj_with, restricted_tj_alpha, Quadrature};
use curvelab::oscillatory::{
    constructed_pair, finite_difference_derivative, inverse_derivatives, inverse_function, pair_sample_points,
    perturbation_pair_check, stationary_phase_normalized, sublevel_check, SmoothFn,
};
use curvelab::polynomials::{default_h_ladder, level_set_experiment, with_derivative_roots};
use curvelab::scales::{classify_scales_auto, verify_cardinality_bound};
use curvelab::sharpness::{
    default_rootorder, endpoint_exponent, endpoint_scaling_experiment, rootorder_exponent,
    rootorder_scaling_experiment,
};
use curvelab::tiling::{
    check_selection, greedy_tree_selection, random_indicator, random_open_set, random_tile_set, whitney_decompose,
    whitney_pair_properties, SizeParams, Which,
};
use curvelab::{CutoffFamily, GridFunction, Polynomial};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn ladder(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| 2f64.powi(-k)).collect()
}

fn endpoint_exponent_sign_change() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut slopes = Vec::new();
    for r in [0.4, 0.5, 0.6] {
        let rep = endpoint_scaling_experiment(2, r, 2.0 * r, 2.0 * r, &ladder(6, 14)).unwrap();
        let slope = rep.fits["slope"];
        let want = endpoint_exponent(2, r);
        pass &= (slope - want).abs() <= 0.05;
        slopes.push(slope);
        parts.push(format!("r={r} slope={slope:.4} want={want:.4}"));
    }
    pass &= slopes[0] < 0.0 && slopes[2] > 0.0 && slopes[1].abs() <= 0.05;
    outcome(pass, parts.join(", "))
}

fn level_set_characterization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut fails = 0;
    for i in 0..20 {
        let m = 1 + i % 3;
        let mut roots: Vec<(f64, usize)> = Vec::new();
        let extra = rng.gen_range(0..=2);
        while roots.len() < 1 + extra {
            let s = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let r = s * rng.gen_range(0.2..1.5);
            if roots.iter().all(|q| (q.0 - r).abs() >= 0.4) {
                let order = if roots.is_empty() { m } else { rng.gen_range(1..=m) };
                roots.push((r, order));
            }
        }
        let p = with_derivative_roots(&roots).unwrap();
        let rep = level_set_experiment(&p, &default_h_ladder(), (-2.0, 2.0)).unwrap();
        let want = 1.0 / m as f64;
        assert_eq!(rep.fits["max_root_order"], m as f64);
        let rel = (rep.fits["slope"] - want).abs() / want;
        worst = worst.max(rel);
        fails += usize::from(rel > 0.1);
    }
    outcome(fails == 0, format!("20 polynomials, worst relative slope error {worst:.4}"))
}

fn cardinality_bound_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut ok, mut continuous, mut max_count) = (0, 0, 0);
    for _ in 0..1000 {
        let d = rng.gen_range(2..=6);
        let a: Vec<f64> = (1..=d)
            .map(|k| {
                if k == 1 || (k < d && rng.gen_bool(0.3)) {
                    return 0.0;
                }
                let s = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                s * 2f64.powf(rng.gen_range(-60.0..60.0))
            })
            .collect();
        let p = Polynomial::new(&a);
        let part = classify_scales_auto(&p, 8).unwrap();
        let check = verify_cardinality_bound(&part, p.degree()).unwrap();
        ok += usize::from(check.ok);
        max_count = max_count.max(check.count);
        continuous += usize::from((2..=p.degree()).all(|l| part.is_continuous(l)));
    }
    outcome(
        ok == 1000 && continuous == 1000,
        format!("bound held {ok}/1000, continuity {continuous}/1000, largest #J_good {max_count}"),
    )
}

fn root_order_counterexample() -> Outcome {
    let (p, t0, k0, a_big) = default_rootorder();
    let mut pass = true;
    let mut parts = Vec::new();
    for r in [0.4, 0.6] {
        let rep = rootorder_scaling_experiment(&p, t0, k0, a_big, r, 2.0 * r, 2.0 * r, &ladder(6, 14)).unwrap();
        let slope = rep.fits["slope"];
        let want = rootorder_exponent(k0, r);
        pass &= (slope - want).abs() <= 0.05;
        parts.push(format!("r={r} slope={slope:.4} want={want:.4}"));
    }
    outcome(pass, parts.join(", "))
}

fn van_der_corput_sublevel() -> Outcome {
    let u = SmoothFn::from_polynomial(&Polynomial::new(&[0.0, 0.5]), (-2.0, 2.0));
    let alphas = ladder(2, 16);
    let rep = sublevel_check(&u, 2, &alphas, (-2.0, 2.0)).unwrap();
    let mut worst: f64 = 0.0;
    for (a, m) in rep.column_f64("alpha").unwrap().iter().zip(rep.column_f64("measure").unwrap()) {
        worst = worst.max((m / (2.0 * (2.0 * a).sqrt()) - 1.0).abs());
    }
    let mut pass = worst <= 0.01;
    // |{|u| <= α}| <= (k! 2^{2k-1})^{1/k} α^{1/k} whenever |u^(k)| >= 1
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_ck = [0.0f64; 5];
    for i in 0..100 {
        let k = 1 + i % 4;
        let mut c: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lead: f64 = rng.gen_range(1.0..3.0) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let fact: f64 = (1..=k).map(|x| x as f64).product();
        c.push(lead / fact);
        let u = SmoothFn::from_polynomial(&Polynomial::from_full(&c), (-1.0, 1.0));
        let rep = sublevel_check(&u, k, &alphas, (-1.0, 1.0)).unwrap();
        worst_ck[k] = worst_ck[k].max(rep.fits["C_k"]);
    }
    let mut parts = vec![format!("t^2/2 worst rel err {worst:.2e}")];
    for k in 1..=4 {
        let fact: f64 = (1..=k).map(|x| x as f64).product();
        let bound = (fact * 2f64.powi(2 * k as i32 - 1)).powf(1.0 / k as f64);
        pass &= worst_ck[k] <= bound;
        parts.push(format!("C_{k}={:.3}<={bound:.3}", worst_ck[k]));
    }
    outcome(pass, parts.join(", "))
}

fn stationary_phase() -> Outcome {
    let fam = CutoffFamily::new();
    let mut pass = true;
    let mut parts = Vec::new();
    for (xi, eta) in [(-2.0, 1.0), (3.0, -1.0), (1.5, 1.0)] {
        let (v, limit) = stationary_phase_normalized(14, xi, eta, &fam).unwrap();
        let rel = (v / limit - 1.0).abs();
        pass &= rel <= 0.02;
        parts.push(format!("({xi},{eta}) rel {rel:.2e}"));
    }
    outcome(pass, parts.join(", "))
}

fn inverse_perturbation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for _ in 0..50 {
        let pair = constructed_pair(&mut rng);
        let rep = perturbation_pair_check(&pair, &pair_sample_points(&pair, 16)).unwrap();
        worst = worst.max(rep.fits["norm"]);
        pass &= rep.fits["norm"] <= 2f64.powi(-10);
    }
    let mut same = constructed_pair(&mut rng);
    same.f1 = same.f0.clone();
    let zero = perturbation_pair_check(&same, &pair_sample_points(&same, 16)).unwrap().fits["norm"];
    pass &= zero == 0.0;
    outcome(pass, format!("worst D_5 inverse distance {worst:.3e}, identical pair {zero}"))
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Horner with the rounding error carried separately: `p(t) ≈ s + e`.
fn compensated_horner(c: &[f64], t: f64) -> (f64, f64) {
    let mut s = *c.last().unwrap();
    let mut e = 0.0;
    for &a in c.iter().rev().skip(1) {
        let (p, ep) = two_prod(s, t);
        let (s2, es) = two_sum(p, a);
        s = s2;
        e = e * t + (ep + es);
    }
    (s, e)
}

fn compensated_sum(terms: &[f64]) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for &t in terms {
        let (s2, e) = two_sum(s, t);
        s = s2;
        c += e;
    }
    s + c
}

fn inverse_derivative_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut a = vec![rng.gen_range(1.0..2.0)];
        a.extend((0..4).map(|_| rng.gen_range(-0.05..0.05)));
        let p = Polynomial::new(&a);
        let dp = p.derivative();
        let coeffs = p.coeffs().to_vec();
        let f = SmoothFn::from_polynomial(&p, (-1.0, 1.0));
        let x0 = rng.gen_range(-0.25..0.25);
        let y0 = p.eval(x0);
        let d = inverse_derivatives(&f, x0, 4).unwrap();
        // differences of the inverse lose everything below one ulp, so the
        // oracle differentiates r(y) = F^{-1}(y) - x0 - (y - y0) s, evaluated
        // past double precision by one compensated Newton correction
        let s = 1.0 / dp.eval(x0);
        let r = |y: f64| {
            let x = inverse_function(&f, y, (-1.0, 1.0)).unwrap();
            let (v, ev) = compensated_horner(&coeffs, x);
            let corr = -((v - y) + ev) / dp.eval(x);
            let (b, eb) = two_sum(y, -y0);
            let (c, ec) = two_prod(b, s);
            compensated_sum(&[x, -x0, corr, -c, -ec, -eb * s])
        };
        for n in 1..=4 {
            let fd = finite_difference_derivative(r, y0, n, 0.1, 4) + if n == 1 { s } else { 0.0 };
            worst = worst.max((d[n - 1] - fd).abs() / fd.abs());
        }
    }
    // inverse of exp is ln: ln^(n)(y) = (-1)^{n-1} (n-1)! / y^n
    let e = SmoothFn::with_derivatives(f64::exp, |t, _| t.exp(), (-1.0, 1.0));
    let mut closed: f64 = 0.0;
    for x0 in [-0.5, 0.0, 0.25, 0.7] {
        let y = f64::exp(x0);
        let d = inverse_derivatives(&e, x0, 5).unwrap();
        let mut fact = 1.0;
        for n in 1..=5 {
            if n > 1 {
                fact *= (n - 1) as f64;
            }
            let want = if n % 2 == 1 { 1.0 } else { -1.0 } * fact / y.powi(n as i32);
            closed = closed.max((d[n - 1] - want).abs());
        }
    }
    outcome(worst <= 1e-6 && closed <= 1e-10, format!("quintics worst rel {worst:.2e}, ln closed form {closed:.2e}"))
}

fn whitney_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut counts = [0usize; 5];
    let mut far_bad = 0.0;
    let (mut worst_far, mut worst_near, mut worst_cov) = (f64::INFINITY, 1.0f64, 0.0f64);
    for i in 0..10_000u64 {
        let om = random_open_set(&mut rng, 8);
        let fam = whitney_decompose(&om).unwrap();
        let rep = whitney_pair_properties(&fam, &om, 200, i).unwrap();
        for (c, key) in counts.iter_mut().zip(["disjoint", "coverage", "sandwich", "far_pairs", "near_pairs"]) {
            *c += usize::from(!rep.flags[key]);
        }
        far_bad += rep.fits["far_violations"];
        worst_far = worst_far.min(rep.fits["worst_far_ratio"]);
        worst_near = worst_near.max(rep.fits["worst_near_ratio"]);
        worst_cov = worst_cov.max(rep.fits["coverage_defect"]);
    }
    outcome(
        counts.iter().all(|&c| c == 0),
        format!(
            "sets failing disjoint/coverage/sandwich/far/near = {counts:?}, far-pair violations {far_bad}, \
             worst far ratio {worst_far:.4} (need >= {:.4}), worst near ratio {worst_near:.1}, worst relative defect {worst_cov:.1e}",
            95.0 / 98.0
        ),
    )
}

fn greedy_selection() -> Outcome {
    let fam = CutoffFamily::new();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut bad = 0;
    let mut packing: f64 = 0.0;
    for run in 0..500 {
        let (which, j0) = if run % 2 == 0 { (Which::One, 5) } else { (Which::Two, 2) };
        let data = random_indicator(&mut rng, 4096).unwrap();
        let tiles = random_tile_set(&mut rng, j0, 200);
        let params = SizeParams::new(which, 2.0, 2, 0);
        let sel = greedy_tree_selection(&tiles, &data, &params, &fam).unwrap();
        let c = check_selection(&tiles, &sel, &data, &params, &fam).unwrap();
        let recomputed = (c.recomputed_residual_size - sel.residual_size).abs() <= 1e-9 * sel.initial_size.max(1e-300);
        if !(c.residual_halved && c.tops_disjoint && c.containment && c.trees_above_threshold && recomputed) {
            bad += 1;
        }
        packing = packing.max(c.packing_constant);
    }
    outcome(bad == 0, format!("{} / 500 runs with every postcondition, largest packing constant {packing:.3}", 500 - bad))
}

fn operator_sanity() -> Outcome {
    let fam = CutoffFamily::new();
    let gauss = |c: f64, w: f64| move |x: f64| (-(x - c) * (x - c) / (w * w)).exp();
    let p = Polynomial::new(&[0.0, 1.0, -0.3]);
    let f1 = GridFunction::from_fn(-6.0, 6.0, 481, gauss(0.0, 1.0)).unwrap();
    let f2 = GridFunction::from_fn(-6.0, 6.0, 481, |x| (2.0 * x).sin() * gauss(0.5, 1.2)(x)).unwrap();
    let g1 = GridFunction::from_fn(-8.0, 8.0, 641, gauss(0.5, 1.5)).unwrap();
    let g2 = GridFunction::from_fn(-8.0, 8.0, 641, |x| (1.0 + x).cos() * gauss(-0.5, 2.0)(x)).unwrap();
    let t = |f: &GridFunction, g: &GridFunction| apply_tj(f, g, &p, 0, &fam).unwrap().output;
    let maxdiff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);

    let (a, b) = (1.7, -0.6);
    let lin_f = t(&f1.lincomb(a, &f2, b).unwrap(), &g1);
    let want: Vec<f64> = t(&f1, &g1).values.iter().zip(&t(&f2, &g1).values).map(|(x, y)| a * x + b * y).collect();
    let mut bilinear = maxdiff(&lin_f.values, &want);
    let lin_g = t(&f1, &g1.lincomb(a, &g2, b).unwrap());
    let want: Vec<f64> = t(&f1, &g1).values.iter().zip(&t(&f1, &g2).values).map(|(x, y)| a * x + b * y).collect();
    bilinear = bilinear.max(maxdiff(&lin_g.values, &want));

    let shift = 0.37;
    let moved = |h: &GridFunction| GridFunction::new(h.lo + shift, h.hi + shift, h.values.clone()).unwrap();
    let translated = maxdiff(&t(&moved(&f1), &moved(&g1)).values, &t(&f1, &g1).values);

    let one_f = GridFunction::from_fn(-20.0, 20.0, 801, |_| 3.0).unwrap();
    let one_g = GridFunction::from_fn(-40.0, 40.0, 1601, |_| -2.0).unwrap();
    let c = t(&one_f, &one_g);
    let cancel = c.values[300..500].iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let whole = t(&f1, &g1);
    let mut sum = vec![0.0; f1.n];
    for k in -30..=6 {
        let piece = restricted_tj_alpha(&f1, &g1, &p, 0, 2f64.powi(k), &fam).unwrap().output;
        for (s, v) in sum.iter_mut().zip(&piece.values) {
            *s += v;
        }
    }
    let ladder_err = maxdiff(&sum, &whole.values);

    // grid doubling with node counts tied to the grid step
    let q = Quadrature { min_nodes: 16, nodes_per_step: 2.0 };
    let at = |n: usize| {
        let f = GridFunction::from_fn(-6.0, 6.0, 48 * n + 1, gauss(0.0, 1.0)).unwrap();
        let g = GridFunction::from_fn(-8.0, 8.0, 64 * n + 1, gauss(0.5, 1.5)).unwrap();
        let out = apply_tj_with(&f, &g, &p, 0, &fam, &q).unwrap().output;
        (0..=48).map(|i| out.values[i * n]).collect::<Vec<f64>>()
    };
    let (u1, u2, u4) = (at(1), at(2), at(4));
    let order = (maxdiff(&u1, &u2) / maxdiff(&u2, &u4)).log2();

    let pass = bilinear <= 1e-12 && translated <= 1e-12 && cancel <= 1e-10 && ladder_err <= 1e-8 && order >= 1.9;
    outcome(
        pass,
        format!(
            "bilinearity {bilinear:.1e}, translation {translated:.1e}, constants {cancel:.1e}, \
             alpha ladder {ladder_err:.1e}, self-convergence order {order:.3}"
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 11] = [
    ("endpoint exponent and sign change", endpoint_exponent_sign_change),
    ("level-set decay exponent", level_set_characterization),
    ("good-scale cardinality bound", cardinality_bound_suite),
    ("root-order counterexample", root_order_counterexample),
    ("van der Corput sublevel", van_der_corput_sublevel),
    ("stationary phase normalization", stationary_phase),
    ("inverse perturbation pairs", inverse_perturbation),
    ("inverse derivatives", inverse_derivative_oracles),
    ("Whitney decomposition", whitney_suite),
    ("greedy tree selection", greedy_selection),
    ("operator sanity", operator_sanity),
];

fn main() -> ExitCode {
    let picked: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (i, (name, run)) in CRITERIA.iter().enumerate() {
        let id = i + 1;
        if !picked.is_empty() && !picked.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {verdict} {name} ({:.1}s): {}", start.elapsed().as_secs_f64(), o.detail);
        if !o.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
