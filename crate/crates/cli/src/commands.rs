use crate::{Context, Failure, Format};
use clap::Args;
use pbc_core::bifurcation::{attractor_sets, interior_points, last_bifurcation, render_svg, sweep, SvgAxes, SweepConfig};
use pbc_core::blocks::{build_blocks, BlockDecomposition, BlockOptions};
use pbc_core::control::{pbc_orbit, ControlSchedule};
use pbc_core::map::{continuity_audit, find_equilibria, sign_pattern_check, EquilibriumAnalysis, KnotMismatch, MapKind};
use pbc_core::par::Exec;
use pbc_core::stochastic::{classify_outcome, run_ensemble, run_seed, stoch_orbit, AdmissibleRegion, EnsembleConfig, NoiseKind, Outcome};
use pbc_core::thresholds::{analyze_thresholds, certify_alpha0, DeltaInterval, DeltaPolicy, FourEq, ThresholdOptions, ThresholdReport};
use pbc_core::verify::{default_maps, run_verify, VerifyOptions, SUITES};
use pbc_core::MapSpec;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

fn need_map<'a>(ctx: &'a Context) -> Result<&'a MapSpec, Failure> {
    ctx.map.as_ref().ok_or_else(|| Failure::config("--map is required"))
}

fn analysis_of(map: &MapSpec) -> Result<EquilibriumAnalysis, Failure> {
    Ok(find_equilibria(map, Default::default())?)
}

/// Largest state worth sampling: `K_{j0}`, or `max g` past the last finite equilibrium.
fn state_top(a: &EquilibriumAnalysis) -> f64 {
    let j0 = a.j0();
    if a.upper_infinite {
        a.g_max.max(a.k_trunc(j0))
    } else {
        a.k(j0)
    }
}

fn print_csv(bytes: &[u8]) {
    print!("{}", String::from_utf8_lossy(bytes));
}

fn to_csv(f: impl FnOnce(&mut Vec<u8>) -> pbc_core::Result<()>) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AnalyzeArgs {
    /// auto, strict, trap, or a fixed delta value.
    #[arg(long, default_value = "auto")]
    pub delta_policy: String,
    /// Control at which the d/c trace and the two-cycles are reported.
    #[arg(long)]
    pub trace_beta: Option<f64>,
    /// List the delta values for which this control satisfies the trap inequalities.
    #[arg(long)]
    pub certify_beta: Option<f64>,
    /// Skip the noisy block thresholds.
    #[arg(long)]
    pub deterministic_only: bool,
}

fn parse_policy(s: &str) -> Result<DeltaPolicy, Failure> {
    match s {
        "auto" => Ok(DeltaPolicy::Auto),
        "strict" => Ok(DeltaPolicy::Strict),
        "trap" => Ok(DeltaPolicy::Trap),
        v => match v.parse::<f64>() {
            Ok(d) if d >= 0.0 => Ok(DeltaPolicy::Fixed(d)),
            _ => Err(Failure::config(format!("bad --delta-policy {v:?} (auto, strict, trap or a number >= 0)"))),
        },
    }
}

#[derive(Serialize)]
struct Certification {
    beta: f64,
    delta_intervals: Vec<DeltaInterval>,
}

#[derive(Serialize)]
struct AnalyzeReport<'a> {
    map: String,
    analysis: &'a EquilibriumAnalysis,
    sign_pattern_ok: bool,
    continuity_mismatches: Vec<KnotMismatch>,
    thresholds: Option<&'a ThresholdReport>,
    certification: Option<Certification>,
    admissible_region: Option<AdmissibleRegion>,
    blocks: Option<&'a BlockDecomposition>,
    blocks_error: Option<String>,
}

pub fn analyze(ctx: &mut Context, args: &AnalyzeArgs) -> Result<(), Failure> {
    let map = need_map(ctx)?.clone();
    let policy = parse_policy(&args.delta_policy)?;
    if let Some(b) = args.trace_beta.into_iter().chain(args.certify_beta).find(|b| !(0.0..1.0).contains(b)) {
        return Err(Failure::config(format!("control {b} outside [0, 1)")));
    }
    let a = analysis_of(&map)?;
    let sign_ok = sign_pattern_check(&a);
    let continuity = if matches!(map.kind, MapKind::Piecewise(_)) { continuity_audit(&map, 1e-9) } else { Vec::new() };
    let four = a.j0() == 4;
    let exec = Exec::Parallel;
    let thresholds = if four {
        Some(analyze_thresholds(&map, &a, ThresholdOptions { policy, trace_beta: args.trace_beta, exec })?)
    } else {
        None
    };
    let certification = match args.certify_beta {
        Some(beta) => {
            let eq = FourEq::from_analysis(&a)?;
            Some(Certification { beta, delta_intervals: certify_alpha0(&map, &eq, beta, 400) })
        }
        None => None,
    };
    let blocks = build_blocks(&map, &a, BlockOptions { stochastic: !args.deterministic_only, exec });
    let (blocks, blocks_error) = match blocks {
        Ok(b) => (Some(b), None),
        Err(e) if four => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let region = thresholds.as_ref().map(|t| AdmissibleRegion::four_equilibrium(t.alpha0, t.underline_alpha));
    let report = AnalyzeReport {
        map: map.name.clone(),
        analysis: &a,
        sign_pattern_ok: sign_ok.is_ok(),
        continuity_mismatches: continuity.clone(),
        thresholds: thresholds.as_ref(),
        certification,
        admissible_region: region.clone(),
        blocks: blocks.as_ref(),
        blocks_error: blocks_error.clone(),
    };
    ctx.out.write_json("analysis.json", &report)?;
    let trace_csv = match &thresholds {
        Some(t) => {
            let bytes = to_csv(|w| dc_trace_of(t).write_csv(w))?;
            ctx.out.write("dc_trace.csv", &bytes)?;
            Some(bytes)
        }
        None => None,
    };
    let eq_csv = equilibria_csv(&a);
    ctx.out.write("equilibria.csv", eq_csv.as_bytes())?;
    match ctx.cli.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Failure::analysis(e.to_string()))?),
        Format::Csv => print_csv(trace_csv.as_deref().unwrap_or(eq_csv.as_bytes())),
        Format::Text => print!("{}", analyze_text(&map, &a, &report)),
    }
    if let Err(v) = sign_ok {
        ctx.status = Some(Failure::analysis(format!(
            "sign pattern of g(x) - x breaks on interval {}: expected {} found {}",
            v.interval,
            v.expected.symbol(),
            v.found.symbol()
        )));
    } else if let Some(k) = continuity.first() {
        ctx.status = Some(Failure::analysis(format!("map is discontinuous at x = {} ({} vs {})", k.knot, k.left_value, k.right_value)));
    }
    Ok(())
}

fn dc_trace_of(t: &ThresholdReport) -> pbc_core::thresholds::DcTrace {
    pbc_core::thresholds::DcTrace {
        beta: t.trace_beta,
        d: t.d_seq.clone(),
        c: t.c_seq.clone(),
        k0: t.k0,
        d_hat: t.d_hat,
        c_hat: t.c_hat,
        certificate: String::new(),
    }
}

fn equilibria_csv(a: &EquilibriumAnalysis) -> String {
    let mut s = String::from("index,K,L_minus,L_plus\n");
    for (i, k) in a.equilibria.iter().enumerate() {
        let (m, p) = match a.lipschitz_at(i) {
            Some(o) => (format!("{}", o.minus), format!("{}", o.plus)),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(s, "{i},{k},{m},{p}");
    }
    if a.upper_infinite {
        let _ = writeln!(s, "{},inf,,", a.equilibria.len());
    }
    s
}

fn analyze_text(map: &MapSpec, a: &EquilibriumAnalysis, r: &AnalyzeReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "map {}", map.name);
    let ks: Vec<String> = a.equilibria.iter().map(|k| format!("{k:.6}")).collect();
    let _ = writeln!(s, "equilibria: {}{}", ks.join(", "), if a.upper_infinite { ", inf" } else { "" });
    let _ = writeln!(s, "j0 = {}, max g = {:.6}", a.j0(), a.g_max);
    let signs: Vec<&str> = a.signs.iter().map(|x| x.symbol()).collect();
    let _ = writeln!(s, "sign of g(x) - x: {}{}", signs.join(" "), if r.sign_pattern_ok { "" } else { "  (pattern broken)" });
    for k in &r.continuity_mismatches {
        let _ = writeln!(s, "discontinuity at x = {}: {} vs {}", k.knot, k.left_value, k.right_value);
    }
    if let Some(t) = r.thresholds {
        let _ = writeln!(s, "L = {:.6} (inner {:.6}), delta = {:.6} [{}]", t.fit.l, t.fit.l_inner, t.fit.delta, t.fit.policy);
        let _ = writeln!(s, "alpha0 lower bound = {:.6}", t.alpha0);
        let _ = writeln!(s, "g_m = {:.6}, cond1 = {}", t.g_m, t.cond1);
        let _ = writeln!(s, "underline alpha = {:.6}{}", t.underline_alpha, if t.underline_alpha_equals_alpha0 { " (= alpha0)" } else { "" });
        let _ = writeln!(s, "alpha1 estimate = {:.6} (L1 = {:.4}, L3 = {:.4})", t.alpha1.value, t.alpha1.l1, t.alpha1.l3);
        let _ = writeln!(s, "at beta = {:.6}: k0 = {:?}, d_hat = {:.6}, c_hat = {:.6}", t.trace_beta, t.k0, t.d_hat, t.c_hat);
        for (p, q) in &t.two_cycles {
            let _ = writeln!(s, "  two-cycle {{{p:.6}, {q:.6}}}");
        }
    }
    if let Some(c) = &r.certification {
        let _ = write!(s, "beta = {} satisfies the trap inequalities for delta in", c.beta);
        if c.delta_intervals.is_empty() {
            let _ = write!(s, " no interval");
        }
        for d in &c.delta_intervals {
            let _ = write!(s, " ({:.6}, {:.6})", d.lo, d.hi);
        }
        let _ = writeln!(s);
    }
    if let Some(reg) = &r.admissible_region {
        let _ = writeln!(s, "noise region: {} alpha in ({:.6}, {:.6})", reg.kind, reg.alpha_lo, reg.alpha_hi);
        if reg.kind == "two-sided" {
            let (al, el) = reg.sample();
            let _ = writeln!(s, "  e.g. alpha = {al:.6}, ell = {el:.6}");
        }
    }
    if let Some(b) = r.blocks {
        s.push_str(&b.text_summary());
    }
    if let Some(e) = &r.blocks_error {
        let _ = writeln!(s, "blocks: {e}");
    }
    s
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub alpha: f64,
    /// Noise amplitude: the control is alpha + ell * xi.
    #[arg(long, default_value_t = 0.0)]
    pub ell: f64,
    /// bernoulli, uniform or gaussian:<sd>.
    #[arg(long, default_value = "bernoulli")]
    pub noise: String,
    /// Initial value; with --runs > 1 every run starts here.
    #[arg(long)]
    pub x0: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    /// Initial values are drawn uniformly from [x0-lo, x0-hi] when --x0 is absent.
    #[arg(long)]
    pub x0_lo: Option<f64>,
    #[arg(long)]
    pub x0_hi: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub horizon: usize,
    /// Distance to an equilibrium that counts as converged.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Serialize)]
struct OrbitSummary {
    map: String,
    alpha: f64,
    ell: f64,
    noise: String,
    x0: f64,
    seed: Option<u64>,
    steps: usize,
    last: f64,
    converged: bool,
    escaped: bool,
    outcome: Outcome,
}

#[derive(Serialize)]
struct EnsembleSummary<'a> {
    map: String,
    config: &'a EnsembleConfig,
    converged: usize,
    fraction: f64,
    wilson: (f64, f64),
    outcomes: BTreeMap<&'static str, usize>,
}

pub fn simulate(ctx: &mut Context, args: &SimulateArgs) -> Result<(), Failure> {
    let map = need_map(ctx)?.clone();
    let noise = NoiseKind::parse(&args.noise)?;
    let analysis = find_equilibria(&map, Default::default()).ok();
    let eq: Vec<f64> = analysis.as_ref().map(|a| a.equilibria.clone()).unwrap_or_default();
    if args.runs == 0 {
        return Err(Failure::config("--runs must be at least 1"));
    }
    if let (1, Some(x0)) = (args.runs, args.x0) {
        let (orbit, seed) = if args.ell == 0.0 {
            (pbc_orbit(&map, &ControlSchedule::Constant(args.alpha), x0, args.horizon)?, None)
        } else {
            let seed = run_seed(ctx.cli.seed, 0);
            (stoch_orbit(&map, args.alpha, args.ell, noise, x0, args.horizon, seed)?, Some(seed))
        };
        if !(0.0..1.0).contains(&args.alpha) {
            return Err(Failure::config(format!("--alpha {} outside [0, 1)", args.alpha)));
        }
        let outcome = classify_outcome(&map, &orbit, &eq, args.tol);
        let summary = OrbitSummary {
            map: map.name.clone(),
            alpha: args.alpha,
            ell: args.ell,
            noise: noise.to_string(),
            x0,
            seed,
            steps: orbit.steps(),
            last: orbit.last(),
            converged: orbit.converged,
            escaped: orbit.escaped,
            outcome,
        };
        let csv = to_csv(|w| orbit.write_csv(w))?;
        ctx.out.write("orbit.csv", &csv)?;
        ctx.out.write_json("simulate.json", &summary)?;
        match ctx.cli.format {
            Format::Json => println!("{}", serde_json::to_string_pretty(&summary).expect("serializable")),
            Format::Csv => print_csv(&csv),
            Format::Text => println!(
                "{}: alpha = {}, ell = {} ({}), x0 = {}: {} after {} steps, last x = {}",
                summary.map,
                args.alpha,
                args.ell,
                summary.noise,
                x0,
                summary.outcome.tag(),
                summary.steps,
                summary.last
            ),
        }
        return Ok(());
    }
    let range = match (args.x0_lo, args.x0_hi, &analysis) {
        (Some(lo), Some(hi), _) => (lo, hi),
        (None, None, Some(a)) => (a.k(0) + 1e-3, state_top(a) - 1e-3),
        (None, None, None) => (map.domain.lo, map.domain.hi_or(map.scan_upper())),
        _ => return Err(Failure::config("give both --x0-lo and --x0-hi")),
    };
    let cfg = EnsembleConfig {
        alpha: args.alpha,
        ell: args.ell,
        noise,
        runs: args.runs,
        horizon: args.horizon,
        tol: args.tol,
        master_seed: ctx.cli.seed,
        x0_range: range,
        x0_fixed: args.x0,
    };
    let res = run_ensemble(&map, &eq, &cfg, Exec::Parallel)?;
    let mut outcomes = BTreeMap::new();
    for r in &res.runs {
        *outcomes.entry(r.outcome.tag()).or_insert(0) += 1;
    }
    let summary = EnsembleSummary { map: map.name.clone(), config: &cfg, converged: res.converged, fraction: res.fraction, wilson: res.wilson, outcomes };
    let csv = to_csv(|w| res.write_csv(w))?;
    ctx.out.write("ensemble.csv", &csv)?;
    ctx.out.write_json("ensemble.json", &summary)?;
    match ctx.cli.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&summary).expect("serializable")),
        Format::Csv => print_csv(&csv),
        Format::Text => {
            println!(
                "{}: alpha = {}, ell = {} ({}), {} runs: converged {} ({:.4}, 95% CI {:.4}..{:.4})",
                summary.map, args.alpha, args.ell, noise, args.runs, res.converged, res.fraction, res.wilson.0, res.wilson.1
            );
            for (k, v) in &summary.outcomes {
                println!("  {k}: {v}");
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BifurcateArgs {
    #[arg(long)]
    pub alpha_lo: Option<f64>,
    #[arg(long)]
    pub alpha_hi: Option<f64>,
    #[arg(long, default_value_t = 400)]
    pub n_alpha: usize,
    #[arg(long, default_value_t = 0.0)]
    pub ell: f64,
    #[arg(long, default_value = "bernoulli")]
    pub noise: String,
    /// Noise seeds per initial value (noisy sweeps only).
    #[arg(long, default_value_t = 4)]
    pub seeds: usize,
    #[arg(long, default_value_t = 2000)]
    pub transient: usize,
    #[arg(long, default_value_t = 120)]
    pub keep: usize,
    /// Number of initial values spread over the state range.
    #[arg(long, default_value_t = 8)]
    pub x0_count: usize,
    /// Distance to a target that counts as settled.
    #[arg(long)]
    pub band: Option<f64>,
    /// Gap that separates two attractor clusters.
    #[arg(long)]
    pub cluster_tol: Option<f64>,
}

fn default_alpha_range(name: &str) -> (f64, f64) {
    match name {
        "piecewise" | "piecewise-full" => (0.45, 0.65),
        "ricker2" => (0.1, 0.3),
        "ricker3" => (0.75, 0.9),
        "ricker4" => (0.6, 0.95),
        _ => (0.0, 0.99),
    }
}

#[derive(Serialize)]
struct BifurcationReport<'a> {
    map: String,
    config: &'a SweepConfig,
    alpha_step: f64,
    targets: Vec<f64>,
    band: f64,
    cluster_tol: f64,
    alpha_star: Option<f64>,
    escaped_total: usize,
    negative_controls: bool,
    attractors: Vec<(f64, Vec<f64>)>,
}

pub fn bifurcate(ctx: &mut Context, args: &BifurcateArgs) -> Result<(), Failure> {
    let map = need_map(ctx)?.clone();
    let a = analysis_of(&map)?;
    let (dlo, dhi) = default_alpha_range(&map.name);
    let (lo, hi) = (args.alpha_lo.unwrap_or(dlo), args.alpha_hi.unwrap_or(dhi));
    if !(lo <= hi) || args.n_alpha == 0 || args.x0_count == 0 {
        return Err(Failure::config(format!("empty sweep: alpha in [{lo}, {hi}], {} points", args.n_alpha)));
    }
    let top = state_top(&a);
    let mut cfg = SweepConfig::new(lo, hi, interior_points(a.k(0), top, args.x0_count));
    cfg.n_alpha = args.n_alpha;
    cfg.ell = args.ell;
    cfg.noise = NoiseKind::parse(&args.noise)?;
    cfg.seeds = args.seeds;
    cfg.transient = args.transient;
    cfg.keep = args.keep;
    cfg.master_seed = ctx.cli.seed;
    let d = sweep(&map, &cfg, Exec::Parallel)?;
    let cluster_tol = args.cluster_tol.unwrap_or(d.default_cluster_tol());
    let band = args.band.unwrap_or(d.default_band());
    let centers = attractor_sets(&d, cluster_tol);
    let targets = a.targets();
    let alpha_star = last_bifurcation(&d.alphas, &centers, &targets, band);
    let report = BifurcationReport {
        map: map.name.clone(),
        config: &cfg,
        alpha_step: cfg.step(),
        targets,
        band,
        cluster_tol,
        alpha_star,
        escaped_total: d.escaped.iter().sum(),
        negative_controls: d.negative_controls,
        attractors: d.alphas.iter().copied().zip(centers).collect(),
    };
    let csv = to_csv(|w| d.write_csv(w))?;
    let title = if cfg.ell > 0.0 { format!("{} ell={} {}", map.name, cfg.ell, cfg.noise) } else { map.name.clone() };
    let svg = render_svg(&d, SvgAxes { x_lo: lo, x_hi: hi.max(lo + 1e-9), y_lo: a.k(0), y_hi: top }, &title);
    ctx.out.write("diagram.csv", &csv)?;
    ctx.out.write("diagram.svg", svg.as_bytes())?;
    ctx.out.write_json("bifurcation.json", &report)?;
    match ctx.cli.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&report).expect("serializable")),
        Format::Csv => print_csv(&csv),
        Format::Text => {
            let star = alpha_star.map_or("none in range".to_string(), |v| format!("{v:.4}"));
            println!("{title}: alpha in [{lo}, {hi}] step {:.5}, last bifurcation alpha* = {star} (band {band})", cfg.step());
            if d.negative_controls {
                println!("  note: alpha - ell < 0 at the low end of the sweep");
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct VerifyArgs {
    /// Comma-separated suite names; all suites when absent.
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<String>,
    /// Noise draws per run-frequency check.
    #[arg(long, default_value_t = 1_000_000)]
    pub noise_samples: usize,
    /// Print the suite names and exit.
    #[arg(long)]
    pub list: bool,
}

pub fn verify(ctx: &mut Context, args: &VerifyArgs) -> Result<(), Failure> {
    if args.list {
        for s in SUITES {
            println!("{s}");
        }
        return Ok(());
    }
    let maps = match &ctx.map {
        Some(m) => vec![m.clone()],
        None => default_maps(),
    };
    let opts = VerifyOptions { only: args.only.clone(), seed: ctx.cli.seed, exec: Exec::Parallel, noise_samples: args.noise_samples };
    let report = run_verify(maps, &opts)?;
    ctx.out.write_json("verify.json", &report)?;
    match ctx.cli.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&report).expect("serializable")),
        Format::Csv => {
            println!("suite,passed,checks,violations");
            for s in &report.suites {
                println!("{},{},{},{}", s.name, s.passed, s.checks, s.violations);
            }
        }
        Format::Text => print!("{}", report.text_summary()),
    }
    if !report.all_passed {
        let failed: Vec<&str> = report.suites.iter().filter(|s| !s.passed).map(|s| s.name.as_str()).collect();
        ctx.status = Some(Failure::verify(format!("failed suites: {}", failed.join(", "))));
    }
    Ok(())
}
