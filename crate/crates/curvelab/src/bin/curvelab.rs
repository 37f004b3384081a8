//! `curvelab <subcommand> --config path.json [--out dir] [--seed u64] [--schema]`

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use curvelab::oscillatory::{
    constructed_pair, finite_difference_derivative, inverse_derivatives, inverse_function, pair_sample_points,
    perturbation_pair_check, stationary_phase_normalized, sublevel_check, SmoothFn,
};
use curvelab::operators::{apply_m, apply_tj, default_epsilon_grid, multiplier_mmn};
use curvelab::polynomials::{default_h_ladder, level_set_experiment};
use curvelab::scales::{classify_scales, classify_scales_auto, verify_cardinality_bound};
use curvelab::sharpness::{
    default_delta_ladder, default_rootorder, endpoint_scaling_experiment_with, rootorder_scaling_experiment,
    DEFAULT_RESOLUTION,
};
use curvelab::tiling::{
    check_selection, greedy_tree_selection, random_indicator, random_open_set, random_tile_set, whitney_decompose,
    whitney_pair_properties, ForestJson, SizeParams, Which,
};
use curvelab::{CutoffFamily, Error, ExperimentReport, GridFunction, Polynomial};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "curvelab", version, about = "Bilinear operators along polynomial curves: experiments and checks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Dyadic scale classification and the J_good cardinality bound
    Classify(Opts),
    /// Level sets of P' - 1 against the largest root order
    Levelset(Opts),
    /// Endpoint counterexample scaling in δ
    Sharpness(Opts),
    /// Root-order counterexample scaling in δ
    Rootorder(Opts),
    /// Sublevel-set measures under a k-th derivative floor
    Vdc(Opts),
    /// Normalized stationary-phase integrals along m
    Stationary(Opts),
    /// Inverse-function derivatives against finite differences
    Inverse(Opts),
    /// Inverse distances of constructed (K, N)-pairs
    Pairs(Opts),
    /// Whitney decompositions of random open sets
    Whitney(Opts),
    /// Greedy tree selection on random tile sets
    Tiles(Opts),
    /// T_j(f, g) on a grid
    #[command(name = "apply-T")]
    ApplyT(Opts),
    /// Bilinear maximal function on a grid
    #[command(name = "apply-M")]
    ApplyM(Opts),
    /// Multipliers M_{m,n}(ξ, η)
    Multiplier(Opts),
}

impl Cmd {
    fn parts(&self) -> (&'static str, &Opts) {
        match self {
            Cmd::Classify(o) => ("classify", o),
            Cmd::Levelset(o) => ("levelset", o),
            Cmd::Sharpness(o) => ("sharpness", o),
            Cmd::Rootorder(o) => ("rootorder", o),
            Cmd::Vdc(o) => ("vdc", o),
            Cmd::Stationary(o) => ("stationary", o),
            Cmd::Inverse(o) => ("inverse", o),
            Cmd::Pairs(o) => ("pairs", o),
            Cmd::Whitney(o) => ("whitney", o),
            Cmd::Tiles(o) => ("tiles", o),
            Cmd::ApplyT(o) => ("apply-T", o),
            Cmd::ApplyM(o) => ("apply-M", o),
            Cmd::Multiplier(o) => ("multiplier", o),
        }
    }
}

#[derive(Args, Clone)]
struct Opts {
    /// JSON config; flags below override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Print the CSV schema of the subcommand and exit
    #[arg(long)]
    schema: bool,
    /// Coefficients a_1,...,a_d
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    poly: Option<Vec<f64>>,
    #[arg(long = "N")]
    n_param: Option<i32>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    p1: Option<f64>,
    #[arg(long)]
    p2: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    j: Option<i32>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    m: Option<i32>,
    #[arg(long, allow_hyphen_values = true)]
    xi: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    eta: Option<f64>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    which: Option<u8>,
    #[arg(long)]
    p: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Grid {
    lo: f64,
    hi: f64,
    n: usize,
}

/// Every field is optional; absent fields take per-subcommand defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    subcommand: Option<String>,
    poly: Option<Vec<f64>>,
    n_param: Option<i32>,
    j_range: Option<(i32, i32)>,
    d: Option<usize>,
    r: Option<f64>,
    p1: Option<f64>,
    p2: Option<f64>,
    deltas: Option<Vec<f64>>,
    h_list: Option<Vec<f64>>,
    alphas: Option<Vec<f64>>,
    resolution: Option<usize>,
    t0: Option<f64>,
    k0: Option<usize>,
    a_big: Option<f64>,
    k: Option<usize>,
    interval: Option<(f64, f64)>,
    domain: Option<(f64, f64)>,
    xi: Option<f64>,
    eta: Option<f64>,
    x0: Option<f64>,
    n_max: Option<usize>,
    m_list: Option<Vec<i32>>,
    n_list: Option<Vec<i32>>,
    j: Option<i32>,
    l: Option<usize>,
    m: Option<i32>,
    grid: Option<Grid>,
    epsilons: Option<Vec<f64>>,
    count: Option<usize>,
    pairs: Option<usize>,
    max_parts: Option<usize>,
    which: Option<u8>,
    p: Option<f64>,
    j0: Option<i32>,
    max_tiles: Option<usize>,
    three_summands: Option<bool>,
    seed: Option<u64>,
}

enum Failure {
    Usage(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn schema(sub: &str) -> &'static [&'static str] {
    match sub {
        "classify" => &["j", "class"],
        "levelset" => &["h", "measure", "predicted_exponent"],
        "sharpness" | "rootorder" => &["delta", "ratio", "predicted_exponent", "fitted_slope", "pass"],
        "vdc" => &["alpha", "measure", "ratio"],
        "stationary" => &["m", "value", "limit", "rel_err"],
        "inverse" => &["n", "reversion", "finite_difference", "rel_err"],
        "pairs" => &["pair", "norm", "bound", "dk_distance", "pass"],
        "whitney" => &[
            "set",
            "components",
            "measure",
            "intervals",
            "coverage_defect",
            "worst_far_ratio",
            "worst_near_ratio",
            "far_violations",
            "near_violations",
            "pass",
        ],
        "tiles" => &[
            "run",
            "tiles",
            "trees",
            "initial_size",
            "threshold",
            "residual_size",
            "recomputed_residual_size",
            "packing_constant",
            "residual_halved",
            "tops_disjoint",
            "containment",
            "trees_above_threshold",
        ],
        "apply-T" | "apply-M" => &["x", "f", "g", "value"],
        "multiplier" => &["m", "n", "re", "im", "abs"],
        _ => &[],
    }
}

fn load_config(opts: &Opts, sub: &str) -> Result<Config, Failure> {
    let mut cfg = match &opts.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            serde_json::from_str::<Config>(&text).map_err(|e| usage(format!("config: {e}")))?
        }
        None => Config::default(),
    };
    if let Some(s) = &cfg.subcommand {
        if s != sub {
            return Err(usage(format!("config is for `{s}`, not `{sub}`")));
        }
    }
    cfg.subcommand = Some(sub.to_string());
    macro_rules! over {
        ($($f:ident),*) => { $( if opts.$f.is_some() { cfg.$f = opts.$f.clone(); } )* };
    }
    over!(seed, poly, n_param, d, r, p1, p2, deltas, resolution, j, l, m, xi, eta, count, which, p);
    Ok(cfg)
}

/// `(p1, p2)` from the config, defaulting to `p1 = p2 = 2r`.
fn holder_pair(cfg: &Config, r: f64) -> (f64, f64) {
    match (cfg.p1, cfg.p2) {
        (Some(a), Some(b)) => (a, b),
        (Some(a), None) => (a, 1.0 / (1.0 / r - 1.0 / a)),
        (None, Some(b)) => (1.0 / (1.0 / r - 1.0 / b), b),
        (None, None) => (2.0 * r, 2.0 * r),
    }
}

fn poly_or(cfg: &Config, default: &[f64]) -> Polynomial {
    Polynomial::new(cfg.poly.as_deref().unwrap_or(default))
}

fn seed(cfg: &Config) -> u64 {
    cfg.seed.unwrap_or(0)
}

fn input_pair(cfg: &Config) -> Result<(GridFunction, GridFunction), Failure> {
    let g = cfg.grid.clone().unwrap_or(Grid { lo: -4.0, hi: 4.0, n: 1024 });
    let f = GridFunction::from_fn(g.lo, g.hi, g.n, |x| (-x * x).exp())?;
    let h = GridFunction::from_fn(g.lo, g.hi, g.n, |x| (-(x - 0.5) * (x - 0.5)).exp() * (1.0 + 0.5 * x.sin()))?;
    Ok((f, h))
}

type Extra = Vec<(String, String)>;

fn run(sub: &str, cfg: &Config) -> Result<(ExperimentReport, Extra), Failure> {
    let family = CutoffFamily::new();
    let mut extra = Vec::new();
    let report = match sub {
        "classify" => {
            let p = poly_or(cfg, &[0.0, 1.0, 1.0]);
            let n = cfg.n_param.unwrap_or(8);
            let part = match cfg.j_range {
                Some(range) => classify_scales(&p, n, range)?,
                None => classify_scales_auto(&p, n)?,
            };
            let check = verify_cardinality_bound(&part, p.degree())?;
            let mut rep = ExperimentReport::new(sub, schema(sub));
            for (j, c) in part.iter() {
                rep.push_row(vec![j.into(), c.label().into()]);
            }
            rep.fit("count", check.count as f64);
            rep.fit("bound", check.bound as f64);
            rep.flag("cardinality", check.ok, true);
            for l in 2..=p.degree() {
                rep.flag(&format!("continuous_J{l}"), part.is_continuous(l), true);
            }
            extra.push(("classify_partition.json".into(), serde_json::to_string_pretty(&part.to_json()).expect("json")));
            rep
        }
        "levelset" => {
            let p = poly_or(cfg, &[0.0, 1.0, 1.0]);
            let hs = cfg.h_list.clone().unwrap_or_else(default_h_ladder);
            level_set_experiment(&p, &hs, cfg.domain.unwrap_or((-2.0, 2.0)))?
        }
        "sharpness" => {
            let r = cfg.r.unwrap_or(0.5);
            let (p1, p2) = holder_pair(cfg, r);
            let ds = cfg.deltas.clone().unwrap_or_else(default_delta_ladder);
            let res = cfg.resolution.unwrap_or(DEFAULT_RESOLUTION);
            endpoint_scaling_experiment_with(cfg.d.unwrap_or(2), r, p1, p2, &ds, res)?
        }
        "rootorder" => {
            let (dp, dt0, dk0, da) = default_rootorder();
            let p = cfg.poly.as_deref().map(Polynomial::new).unwrap_or(dp);
            let r = cfg.r.unwrap_or(0.75);
            let (p1, p2) = holder_pair(cfg, r);
            let ds = cfg.deltas.clone().unwrap_or_else(default_delta_ladder);
            rootorder_scaling_experiment(
                &p,
                cfg.t0.unwrap_or(dt0),
                cfg.k0.unwrap_or(dk0),
                cfg.a_big.unwrap_or(da),
                r,
                p1,
                p2,
                &ds,
            )?
        }
        "vdc" => {
            let p = poly_or(cfg, &[0.0, 0.5]);
            let iv = cfg.interval.unwrap_or((-1.0, 1.0));
            let alphas = cfg.alphas.clone().unwrap_or_else(|| (2..=16).map(|k| 2f64.powi(-k)).collect());
            sublevel_check(&SmoothFn::from_polynomial(&p, iv), cfg.k.unwrap_or(2), &alphas, iv)?
        }
        "stationary" => {
            let (xi, eta) = (cfg.xi.unwrap_or(1.0), cfg.eta.unwrap_or(-0.5));
            let ms = cfg.m_list.clone().unwrap_or_else(|| (6..=14).collect());
            let mut rep = ExperimentReport::new(sub, schema(sub));
            let mut last = f64::NAN;
            for &m in &ms {
                let (v, lim) = stationary_phase_normalized(m, xi, eta, &family)?;
                last = (v - lim).abs() / lim;
                rep.push_row(vec![m.into(), v.into(), lim.into(), last.into()]);
            }
            rep.fit("final_rel_err", last);
            rep.flag("converged", last <= 0.02, true);
            rep
        }
        "inverse" => {
            let p = poly_or(cfg, &[1.0, 0.05, -0.03, 0.02, 0.01]);
            let iv = cfg.interval.unwrap_or((-1.0, 1.0));
            let x0 = cfg.x0.unwrap_or(0.1);
            let n_max = cfg.n_max.unwrap_or(4);
            let f = SmoothFn::from_polynomial(&p, iv);
            let rev = inverse_derivatives(&f, x0, n_max)?;
            let y0 = f.eval(x0);
            let span = (f.eval(iv.0) - f.eval(iv.1)).abs();
            let inv = |y: f64| inverse_function(&f, y, iv).unwrap_or(f64::NAN);
            let mut rep = ExperimentReport::new(sub, schema(sub));
            let mut worst = 0.0_f64;
            for (i, d) in rev.iter().enumerate() {
                let n = i + 1;
                let fd = finite_difference_derivative(inv, y0, n, span / 16.0, 4);
                let rel = (d - fd).abs() / fd.abs().max(1e-300);
                worst = worst.max(rel);
                rep.push_row(vec![n.into(), (*d).into(), fd.into(), rel.into()]);
            }
            rep.fit("worst_rel_err", worst);
            rep.flag("agree", worst <= 1e-6, true);
            rep
        }
        "pairs" => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed(cfg));
            let mut rep = ExperimentReport::new(sub, schema(sub));
            let mut all = true;
            for i in 0..cfg.count.unwrap_or(50) {
                let pair = constructed_pair(&mut rng);
                let r = perturbation_pair_check(&pair, &pair_sample_points(&pair, 8))?;
                all &= r.pass;
                rep.push_row(vec![i.into(), r.fits["norm"].into(), r.fits["bound"].into(), r.fits["dk_distance"].into(), r.pass.into()]);
            }
            let mut same = constructed_pair(&mut rng);
            same.f1 = same.f0.clone();
            let r = perturbation_pair_check(&same, &pair_sample_points(&same, 8))?;
            rep.fit("identical_norm", r.fits["norm"]);
            rep.flag("all_pairs", all, true);
            rep.flag("identical_zero", r.fits["norm"] == 0.0, true);
            rep
        }
        "whitney" => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed(cfg));
            let mut rep = ExperimentReport::new(sub, schema(sub));
            let mut worst_far = f64::INFINITY;
            let mut all = std::collections::BTreeMap::<String, bool>::new();
            for i in 0..cfg.count.unwrap_or(100) {
                let om = random_open_set(&mut rng, cfg.max_parts.unwrap_or(8));
                let fam = whitney_decompose(&om)?;
                let r = whitney_pair_properties(&fam, &om, cfg.pairs.unwrap_or(200), seed(cfg).wrapping_add(i as u64))?;
                for (k, v) in &r.flags {
                    *all.entry(k.clone()).or_insert(true) &= *v;
                }
                worst_far = worst_far.min(r.fits["worst_far_ratio"]);
                rep.push_row(vec![
                    i.into(),
                    om.len().into(),
                    curvelab::tiling::open_set_measure(&om).into(),
                    fam.len().into(),
                    r.fits["coverage_defect"].into(),
                    r.fits["worst_far_ratio"].into(),
                    r.fits["worst_near_ratio"].into(),
                    r.fits["far_violations"].into(),
                    r.fits["near_violations"].into(),
                    r.pass.into(),
                ]);
            }
            rep.fit("worst_far_ratio", worst_far);
            for (k, v) in all {
                rep.flag(&k, v, true);
            }
            rep
        }
        "tiles" => {
            let which = Which::from_index(cfg.which.unwrap_or(1))?;
            let mut params = SizeParams::new(which, cfg.p.unwrap_or(2.0), cfg.l.unwrap_or(2), cfg.m.unwrap_or(0));
            params.three_summands = cfg.three_summands.unwrap_or(true);
            let j0 = cfg.j0.unwrap_or(if which == Which::One { 5 } else { 2 });
            let n = cfg.grid.as_ref().map_or(4096, |g| g.n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed(cfg));
            let mut rep = ExperimentReport::new(sub, schema(sub));
            let mut forests = Vec::new();
            let mut all = true;
            let mut worst_packing = 0.0_f64;
            for run in 0..cfg.count.unwrap_or(10) {
                let data = random_indicator(&mut rng, n)?;
                let tiles = random_tile_set(&mut rng, j0, cfg.max_tiles.unwrap_or(200));
                let sel = greedy_tree_selection(&tiles, &data, &params, &family)?;
                let c = check_selection(&tiles, &sel, &data, &params, &family)?;
                all &= c.residual_halved && c.tops_disjoint && c.containment && c.trees_above_threshold;
                worst_packing = worst_packing.max(c.packing_constant);
                rep.push_row(vec![
                    run.into(),
                    tiles.len().into(),
                    sel.forest.len().into(),
                    sel.initial_size.into(),
                    sel.threshold.into(),
                    sel.residual_size.into(),
                    c.recomputed_residual_size.into(),
                    c.packing_constant.into(),
                    c.residual_halved.into(),
                    c.tops_disjoint.into(),
                    c.containment.into(),
                    c.trees_above_threshold.into(),
                ]);
                forests.push(ForestJson::new(0, &sel));
            }
            rep.fit("packing_constant", worst_packing);
            rep.flag("postconditions", all, true);
            extra.push(("tiles_forest.json".into(), serde_json::to_string_pretty(&forests).expect("json")));
            rep
        }
        "apply-T" | "apply-M" => {
            let p = poly_or(cfg, &[0.0, 1.0, 1.0]);
            let (f, g) = input_pair(cfg)?;
            let mut rep = ExperimentReport::new(sub, schema(sub));
            let out = if sub == "apply-T" {
                let res = apply_tj(&f, &g, &p, cfg.j.unwrap_or(0), &family)?;
                rep.flag("resolved", !res.warning, false);
                res.output
            } else {
                let eps = cfg.epsilons.clone().unwrap_or_else(|| default_epsilon_grid(&f));
                apply_m(&f, &g, &p, &eps)?
            };
            for i in 0..f.n {
                rep.push_row(vec![f.x(i).into(), f.values[i].into(), g.values[i].into(), out.values[i].into()]);
            }
            rep
        }
        "multiplier" => {
            let p = poly_or(cfg, &[0.0, 1.0, 1.0]);
            let (l, j) = (cfg.l.unwrap_or(2), cfg.j.unwrap_or(0));
            let ms = cfg.m_list.clone().unwrap_or_else(|| (0..=3).collect());
            let ns = cfg.n_list.clone().unwrap_or_else(|| (0..=3).collect());
            let (xi, eta) = (cfg.xi.unwrap_or(3.0), cfg.eta.unwrap_or(5.0));
            let mut rep = ExperimentReport::new(sub, schema(sub));
            for &m in &ms {
                for &n in &ns {
                    let v = multiplier_mmn(&p, l, j, m, n, xi, eta, &family)?;
                    rep.push_row(vec![m.into(), n.into(), v.re.into(), v.im.into(), v.norm().into()]);
                }
            }
            rep
        }
        other => return Err(usage(format!("unknown subcommand `{other}`"))),
    };
    Ok((report, extra))
}

fn write_outputs(out: &Path, sub: &str, report: &ExperimentReport, extra: &Extra) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Io(format!("{}: {e}", out.display()));
    fs::create_dir_all(out).map_err(io)?;
    fs::write(out.join(format!("{sub}.csv")), report.to_csv_string()).map_err(io)?;
    fs::write(out.join(format!("{sub}.json")), report.to_json_pretty()).map_err(io)?;
    for (name, body) in extra {
        fs::write(out.join(name), body).map_err(io)?;
    }
    Ok(())
}

fn init_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var("CURVELAB_THREADS") {
        let n: usize = v.parse().map_err(|_| usage(format!("CURVELAB_THREADS must be a positive integer, got `{v}`")))?;
        if n == 0 {
            return Err(usage("CURVELAB_THREADS must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| usage(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (sub, opts) = cli.cmd.parts();
    if opts.schema {
        println!("{}", schema(sub).join(","));
        return ExitCode::SUCCESS;
    }
    let result = init_threads().and_then(|_| {
        let cfg = load_config(opts, sub)?;
        let start = Instant::now();
        let (mut report, extra) = run(sub, &cfg)?;
        report.runtime_s = start.elapsed().as_secs_f64();
        report.config = serde_json::to_value(&cfg).expect("config serializes");
        write_outputs(&opts.out, sub, &report, &extra)?;
        Ok(report)
    });
    match result {
        Ok(report) => {
            for (k, v) in &report.fits {
                println!("{k} = {v}");
            }
            for (k, v) in &report.flags {
                println!("{k}: {}", if *v { "ok" } else { "FAILED" });
            }
            if report.pass {
                ExitCode::SUCCESS
            } else {
                eprintln!("{sub}: assertion failed");
                ExitCode::from(2)
            }
        }
        Err(Failure::Usage(msg)) | Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
