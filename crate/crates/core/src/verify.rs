//! Property suites run by `pbc verify`.
//!
//! Each suite samples its property over the maps it is given and reports the
//! number of checks, the violations and up to five counterexamples.

use crate::blocks::{build_blocks, BlockDecomposition, BlockOptions};
use crate::control::{g_of, pbc_orbit, ControlSchedule};
use crate::corpus;
use crate::error::{Error, Result};
use crate::map::{continuity_audit, find_equilibria, sign_pattern_check, EquilibriumAnalysis, EquilibriumOptions, MapKind, MapSpec};
use crate::par::{map_range, Exec};
use crate::stochastic::{classify_outcome, high_noise_run_stats, stoch_orbit, trap_violations, NoiseKind};
use crate::thresholds::{analyze_thresholds, dc_sequences, find_two_cycles, DcSetup, DcTrace, ThresholdOptions, ThresholdReport, DEFAULT_MAX_K, K0};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::sync::OnceLock;
use std::time::Instant;

pub const SUITES: [&str; 13] = [
    "endpoints",
    "ordering",
    "reparametrization",
    "convergence-limit",
    "trap-invariance",
    "trap-absorption",
    "nested-invariance",
    "dc-monotonicity",
    "dc-beta-monotonicity",
    "k0-dichotomy",
    "run-frequencies",
    "continuity",
    "sign-pattern",
];

const MAX_EXAMPLES: usize = 5;
const GV_TOL: f64 = 1e-12;

/// Rounding allowance at an equilibrium endpoint.
fn slack(v: f64) -> f64 {
    1e-12 * v.abs().max(1.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub checks: usize,
    pub violations: usize,
    pub counterexamples: Vec<String>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub maps: Vec<String>,
    pub seed: u64,
    pub suites: Vec<SuiteResult>,
    pub all_passed: bool,
    #[serde(skip)]
    pub seconds: f64,
}

impl VerifyReport {
    pub fn text_summary(&self) -> String {
        let mut s = String::new();
        for r in &self.suites {
            s.push_str(&format!(
                "{} {:<22} checks={:<8} violations={:<4} {:.2}s\n",
                if r.passed { "PASS" } else { "FAIL" },
                r.name,
                r.checks,
                r.violations,
                r.seconds
            ));
            for c in &r.counterexamples {
                s.push_str(&format!("     counterexample: {c}\n"));
            }
            for n in &r.notes {
                s.push_str(&format!("     note: {n}\n"));
            }
        }
        s.push_str(&format!("{} in {:.2}s\n", if self.all_passed { "all suites passed" } else { "some suites failed" }, self.seconds));
        s
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub only: Vec<String>,
    pub seed: u64,
    pub exec: Exec,
    /// Draws per run-frequency check.
    pub noise_samples: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { only: Vec::new(), seed: 2024, exec: Exec::Parallel, noise_samples: 1_000_000 }
    }
}

/// The maps checked when none is given.
pub fn default_maps() -> Vec<MapSpec> {
    vec![corpus::piecewise(), corpus::ricker2(), corpus::ricker3()]
}

struct Case {
    map: MapSpec,
    analysis: std::result::Result<EquilibriumAnalysis, String>,
    thresholds: OnceLock<std::result::Result<ThresholdReport, String>>,
    blocks: OnceLock<std::result::Result<BlockDecomposition, String>>,
    exec: Exec,
}

struct DcCase {
    label: String,
    setup: DcSetup,
    lower: f64,
    upper: f64,
    /// Inner end of the left window and of the right window.
    inner: (f64, f64),
}

impl Case {
    fn new(map: MapSpec, exec: Exec) -> Case {
        let analysis = find_equilibria(&map, EquilibriumOptions::default()).map_err(|e| e.to_string());
        Case { map, analysis, thresholds: OnceLock::new(), blocks: OnceLock::new(), exec }
    }

    fn name(&self) -> &str {
        &self.map.name
    }

    fn analysis(&self) -> std::result::Result<&EquilibriumAnalysis, String> {
        self.analysis.as_ref().map_err(|e| e.clone())
    }

    fn four(&self) -> bool {
        matches!(&self.analysis, Ok(a) if a.j0() == 4)
    }

    fn thresholds(&self) -> std::result::Result<&ThresholdReport, String> {
        self.thresholds
            .get_or_init(|| {
                let a = self.analysis()?;
                analyze_thresholds(&self.map, a, ThresholdOptions { exec: self.exec, ..Default::default() }).map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| e.clone())
    }

    fn blocks(&self) -> std::result::Result<&BlockDecomposition, String> {
        self.blocks
            .get_or_init(|| {
                let a = self.analysis()?;
                build_blocks(&self.map, a, BlockOptions { stochastic: false, exec: self.exec }).map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| e.clone())
    }

    /// Upper end of the sampled state range.
    fn top(&self) -> std::result::Result<f64, String> {
        let a = self.analysis()?;
        let j0 = a.j0();
        Ok(if a.upper_infinite { a.g_max.max(a.k_trunc(j0)) } else { a.k(j0) })
    }

    fn bottom(&self) -> std::result::Result<f64, String> {
        Ok(self.analysis()?.k(0))
    }

    fn dc_cases(&self) -> std::result::Result<Vec<DcCase>, String> {
        if self.four() {
            let t = self.thresholds()?;
            let k = t.equilibria.k;
            let delta = t.fit.delta;
            Ok(vec![DcCase {
                label: self.name().to_string(),
                setup: DcSetup { left: k[0], d0: k[1] - delta, c0: k[3] + delta, right: t.g_m.max(k[3] + delta) },
                lower: t.alpha0,
                upper: t.underline_alpha,
                inner: (k[1], k[3]),
            }])
        } else {
            let b = self.blocks()?;
            let a = self.analysis()?;
            let mut out = Vec::new();
            for blk in &b.blocks {
                if let (Some(setup), Some(b0), Some(b1), Some(m)) = (&blk.dc, blk.beta0, blk.beta1, blk.m) {
                    out.push(DcCase {
                        label: format!("{} {}", self.name(), blk.kind.label()),
                        setup: *setup,
                        lower: b0,
                        upper: b1,
                        inner: (a.k_trunc(blk.base + 2 * m + 1), a.k_trunc(blk.base + 2 * m + 3)),
                    });
                }
            }
            Ok(out)
        }
    }
}

#[derive(Default)]
struct Tally {
    checks: usize,
    violations: usize,
    examples: Vec<String>,
    notes: Vec<String>,
    errors: Vec<String>,
}

impl Tally {
    fn check(&mut self, ok: bool, example: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.violations += 1;
            if self.examples.len() < MAX_EXAMPLES {
                self.examples.push(example());
            }
        }
    }

    fn error(&mut self, map: &str, e: String) {
        self.errors.push(format!("{map}: {e}"));
    }

    fn finish(mut self, name: &str, t0: Instant) -> SuiteResult {
        let passed = self.violations == 0 && self.errors.is_empty();
        for e in self.errors.drain(..) {
            if self.examples.len() < MAX_EXAMPLES {
                self.examples.push(e);
            }
        }
        SuiteResult {
            name: name.to_string(),
            passed,
            checks: self.checks,
            violations: self.violations,
            counterexamples: self.examples,
            notes: self.notes,
            seconds: t0.elapsed().as_secs_f64(),
        }
    }
}

fn rng_for(seed: u64, suite: usize, case: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream((suite * 1000 + case) as u64);
    r
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// Run the selected suites. Unknown names are a configuration error.
pub fn run_verify(maps: Vec<MapSpec>, opts: &VerifyOptions) -> Result<VerifyReport> {
    for n in &opts.only {
        if !SUITES.contains(&n.as_str()) {
            return Err(Error::Parameter(format!("unknown suite '{n}'; known: {}", SUITES.join(", "))));
        }
    }
    let t0 = Instant::now();
    let names: Vec<String> = maps.iter().map(|m| m.name.clone()).collect();
    let cases: Vec<Case> = maps.into_iter().map(|m| Case::new(m, opts.exec)).collect();
    let mut suites = Vec::new();
    for (si, name) in SUITES.iter().enumerate() {
        if !opts.only.is_empty() && !opts.only.iter().any(|o| o == name) {
            continue;
        }
        let start = Instant::now();
        let mut t = Tally::default();
        for (ci, case) in cases.iter().enumerate() {
            let mut rng = rng_for(opts.seed, si, ci);
            match *name {
                "endpoints" => endpoints(case, &mut rng, &mut t),
                "ordering" => ordering(case, &mut rng, &mut t),
                "reparametrization" => reparametrization(case, &mut rng, &mut t),
                "convergence-limit" => convergence_limit(case, &mut rng, &mut t),
                "trap-invariance" => trap_invariance(case, &mut rng, &mut t),
                "trap-absorption" => trap_absorption(case, &mut rng, &mut t),
                "nested-invariance" => nested_invariance(case, &mut rng, &mut t),
                "dc-monotonicity" => dc_monotonicity(case, &mut t),
                "dc-beta-monotonicity" => dc_beta_monotonicity(case, &mut t),
                "k0-dichotomy" => k0_dichotomy(case, &mut t),
                "continuity" => continuity(case, &mut t),
                "sign-pattern" => sign_pattern(case, &mut t),
                _ => {}
            }
        }
        if *name == "run-frequencies" {
            run_frequencies(opts, &mut t);
        }
        suites.push(t.finish(name, start));
    }
    let all_passed = suites.iter().all(|s| s.passed);
    Ok(VerifyReport { maps: names, seed: opts.seed, suites, all_passed, seconds: t0.elapsed().as_secs_f64() })
}

macro_rules! or_note {
    ($t:expr, $case:expr, $e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => {
                $t.error($case.name(), e);
                return;
            }
        }
    };
}

fn state_range(case: &Case, t: &mut Tally) -> Option<(f64, f64)> {
    match (case.bottom(), case.top()) {
        (Ok(a), Ok(b)) => Some((a, b)),
        (Err(e), _) | (_, Err(e)) => {
            t.error(case.name(), e);
            None
        }
    }
}

fn endpoints(case: &Case, rng: &mut ChaCha8Rng, t: &mut Tally) {
    let Some((lo, hi)) = state_range(case, t) else { return };
    let m = &case.map;
    for _ in 0..200 {
        let x = uniform(rng, lo, hi);
        let gx = m.eval_or_nan(x);
        let (a, b) = (g_of(m, 0.0, x), g_of(m, 1.0, x));
        t.check(a == gx && b == x, || format!("{}: x={x:e} G(0,x)={a:e} g(x)={gx:e} G(1,x)={b:e}", m.name));
    }
}

fn ordering(case: &Case, rng: &mut ChaCha8Rng, t: &mut Tally) {
    let Some((lo, hi)) = state_range(case, t) else { return };
    let m = &case.map;
    let mut n = 0;
    let mut tries = 0;
    while n < 200 && tries < 20_000 {
        tries += 1;
        let x = uniform(rng, lo, hi);
        let gx = m.eval_or_nan(x);
        if !((gx - x).abs() > 1e-6) {
            continue;
        }
        n += 1;
        let b = uniform(rng, 1e-3, 0.998);
        let a = uniform(rng, b + 1e-3, 0.999);
        let (ga, gb) = (g_of(m, a, x), g_of(m, b, x));
        let ok = if gx > x { gx > gb && gb > ga && ga > x } else { gx < gb && gb < ga && ga < x };
        t.check(ok, || format!("{}: x={x:e} a={a} b={b} g={gx:e} G(b)={gb:e} G(a)={ga:e}", m.name));
    }
}

fn reparametrization(case: &Case, rng: &mut ChaCha8Rng, t: &mut Tally) {
    let Some((lo, hi)) = state_range(case, t) else { return };
    let m = &case.map;
    for _ in 0..200 {
        let x = uniform(rng, lo, hi);
        let mu0 = uniform(rng, 0.0, 0.95);
        let mu = uniform(rng, mu0, 1.0);
        let hat = (mu - mu0) / (1.0 - mu0);
        let lhs = g_of(m, mu, x);
        let rhs = (1.0 - hat) * g_of(m, mu0, x) + hat * x;
        let scale = 1f64.max(m.eval_or_nan(x).abs()).max(x.abs());
        t.check((lhs - rhs).abs() <= GV_TOL * scale, || format!("{}: x={x:e} mu0={mu0} mu={mu} diff={:e}", m.name, (lhs - rhs).abs()));
    }
}

fn convergence_limit(case: &Case, rng: &mut ChaCha8Rng, t: &mut Tally) {
    let Some((lo, hi)) = state_range(case, t) else { return };
    let m = &case.map;
    let a = or_note!(t, case, case.analysis());
    let base = if case.four() {
        or_note!(t, case, case.thresholds()).underline_alpha
    } else {
        or_note!(t, case, case.blocks()).global_bound
    };
    let mut alphas: Vec<f64> = vec![base + 0.01, base + 0.5 * (1.0 - base), 0.95];
    alphas.retain(|v| *v < 1.0);
    let mut converged = 0;
    for &alpha in &alphas {
        for _ in 0..40 {
            let x0 = uniform(rng, lo, hi);
            let Ok(o) = pbc_orbit(m, &ControlSchedule::Constant(alpha), x0, 100_000) else { continue };
            if o.converged {
                converged += 1;
                let x = o.last();
                let r = (m.eval_or_nan(x) - x).abs();
                t.check(r <= 1e-8, || format!("{}: alpha={alpha} x0={x0:e} limit={x:e} |g(x)-x|={r:e}", m.name));
            }
        }
    }
    let eq = a.equilibria.clone();
    for i in 0..40 {
        let x0 = uniform(rng, lo, hi);
        let alpha = uniform(rng, base + 0.02, 0.98);
        let ell = uniform(rng, 0.0, (alpha - base - 0.01).min(1.0 - alpha));
        let Ok(o) = stoch_orbit(m, alpha, ell, NoiseKind::Uniform, x0, 20_000, i) else { continue };
        if let crate::stochastic::Outcome::ConvergedTo(x) = classify_outcome(m, &o, &eq, 1e-9) {
            converged += 1;
            let r = (m.eval_or_nan(x) - x).abs();
            t.check(r <= 1e-8, || format!("{}: noisy alpha={alpha} ell={ell} x0={x0:e} limit={x:e} |g(x)-x|={r:e}", m.name));
        }
    }
    if converged == 0 {
        t.error(case.name(), "no orbit converged".into());
    }
}

fn trap_invariance(case: &Case, rng: &mut ChaCha8Rng, t: &mut Tally) {
    let m = &case.map;
    if case.four() {
        let th = or_note!(t, case, case.thresholds());
        let k = th.equilibria.k;
        let (lo, hi) = (k[1] - th.fit.delta, k[3] + th.fit.delta);
        let start = th.alpha0 + 1e-3;
        for i in 0..20 {
            let beta = start + (1.0 - start) * i as f64 / 20.0;
            for _ in 0..25 {
                let x = uniform(rng, lo, hi);
                let y = g_of(m, beta, x);
                t.check(y >= lo && y <= hi, || format!("{}: beta={beta} x={x:e} G={y:e} outside [{lo:e}, {hi:e}]", m.name));
            }
        }
        let alpha = 0.7;
        if alpha > th.fit.l_inner / (th.fit.l_inner + 1.0) {
            monotone_orbits(m, alpha, k[1], k[2], k[3], rng, t, 100);
        }
        return;
    }
    let b = or_note!(t, case, case.blocks());
    let a = or_note!(t, case, case.analysis());
    let alpha = b.sides.first_stage_bound + 0.01;
    if alpha >= 1.0 {
        t.error(case.name(), format!("first-stage bound {} leaves no room", b.sides.first_stage_bound));
        return;
    }
    let per = 500 / (b.sides.i0 + 1).max(1);
    for c in &b.sides.classes {
        let (l, km, r) = (a.k_trunc(2 * c.i), a.k_trunc(2 * c.i + 1), a.k_trunc(2 * c.i + 2));
        if c.plus_side {
            monotone_side(m, alpha, km, r, false, rng, t, per / 2);
            if b.sides.i_minus.contains(&(c.i + 1)) {
                let (lo, hi) = (km, a.k_trunc(2 * c.i + 3));
                for _ in 0..per / 2 {
                    let x = uniform(rng, lo, hi);
                    let y = g_of(m, alpha, x);
                    t.check(y >= lo && y <= hi, || format!("{}: alpha={alpha} x={x:e} G={y:e} leaves [{lo:e}, {hi:e}]", m.name));
                }
            }
        } else {
            monotone_side(m, alpha, l, km, true, rng, t, per);
        }
    }
}

/// Orbits from `(K1, K3)` stay in `[K1, K3]` and move monotonically until they reach `K1` or `K3`.
#[allow(clippy::too_many_arguments)]
fn monotone_orbits(m: &MapSpec, alpha: f64, k1: f64, k2: f64, k3: f64, rng: &mut ChaCha8Rng, t: &mut Tally, n: usize) {
    for _ in 0..n {
        let x0 = uniform(rng, k1, k3);
        let Ok(o) = pbc_orbit(m, &ControlSchedule::Constant(alpha), x0, 20_000) else { continue };
        let up = x0 > k2;
        let goal = if up { k3 } else { k1 };
        let (lo, hi) = (k1 - slack(k1), k3 + slack(k3));
        let inside = o.states.iter().all(|&x| x >= lo && x <= hi);
        let arrive = o.states.iter().position(|x| (x - goal).abs() <= 1e-9);
        let head = &o.states[..=arrive.unwrap_or(o.states.len() - 1)];
        let mono = head.windows(2).all(|w| if up { w[1] >= w[0] - slack(w[0]) } else { w[1] <= w[0] + slack(w[0]) });
        let close = arrive.is_some() && (o.last() - goal).abs() < 1e-6;
        t.check(inside && mono && close, || format!("{}: alpha={alpha} x0={x0:e} inside={inside} monotone={mono} last={:e}", m.name, o.last()));
    }
}

/// On `(a, b)` orbits stay inside and are non-decreasing (`up`) or non-increasing.
#[allow(clippy::too_many_arguments)]
fn monotone_side(m: &MapSpec, alpha: f64, a: f64, b: f64, up: bool, rng: &mut ChaCha8Rng, t: &mut Tally, n: usize) {
    for _ in 0..n {
        let x0 = uniform(rng, a, b);
        let Ok(o) = pbc_orbit(m, &ControlSchedule::Constant(alpha), x0, 200) else { continue };
        let inside = o.states.iter().all(|&x| x >= a - slack(a) && x <= b + slack(b));
        let mono = o.states.windows(2).all(|w| if up { w[1] >= w[0] - slack(w[0]) } else { w[1] <= w[0] + slack(w[0]) });
        t.check(inside && mono, || format!("{}: alpha={alpha} x0={x0:e} on ({a:e}, {b:e}) inside={inside} monotone={mono}", m.name));
    }
}

fn trap_absorption(case: &Case, rng: &mut ChaCha8Rng, t: &mut Tally) {
    if !case.four() {
        t.notes.push(format!("{}: not a four-equilibrium map, skipped", case.name()));
        return;
    }
    let m = &case.map;
    let th = or_note!(t, case, case.thresholds());
    let k = th.equilibria.k;
    let (lo, hi) = (k[1] - th.fit.delta, k[3] + th.fit.delta);
    let ell = 0.04;
    let alpha = (th.alpha0 + ell + 0.01).min(0.95);
    let top = th.g_m.max(hi);
    for i in 0..50 {
        let x0 = uniform(rng, k[0] + 1e-3, top);
        let Ok(o) = stoch_orbit(m, alpha, ell, NoiseKind::Bernoulli, x0, 2000, i) else { continue };
        let v = trap_violations(&o, lo - slack(lo), hi + slack(hi));
        t.check(v == 0, || format!("{}: alpha={alpha} ell={ell} x0={x0:e} left the trap {v} times", m.name));
    }
}

fn nested_invariance(case: &Case, rng: &mut ChaCha8Rng, t: &mut Tally) {
    let m = &case.map;
    let cases = or_note!(t, case, case.dc_cases());
    for dc in cases {
        for i in 0..5 {
            let beta = dc.lower + (1.0 - dc.lower) * (i as f64 + 0.5) / 5.0;
            let tr = dc_sequences(m, beta, &dc.setup, DEFAULT_MAX_K);
            for k in 1..tr.d.len().min(20) {
                let (lo, hi) = (tr.d[k], tr.c[k - 1]);
                for _ in 0..10 {
                    let x = uniform(rng, lo, hi);
                    let y = g_of(m, beta, x);
                    t.check(y >= lo - slack(lo) && y <= hi + slack(hi), || {
                        format!("{}: beta={beta} k={k} x={x:e} G={y:e} outside [{lo:e}, {hi:e}]", dc.label)
                    });
                }
            }
        }
    }
}

fn stall_index(tr: &DcTrace) -> usize {
    match tr.k0 {
        K0::Finite(k) => k,
        _ => tr.d.len() - 1,
    }
}

fn dc_grid(dc: &DcCase, n: usize) -> Vec<f64> {
    (0..n).map(|i| dc.lower + (1.0 - dc.lower) * (i as f64 + 0.5) / n as f64).collect()
}

fn dc_monotonicity(case: &Case, t: &mut Tally) {
    let m = &case.map;
    let cases = or_note!(t, case, case.dc_cases());
    for dc in cases {
        let grid = dc_grid(&dc, 10);
        let traces = map_range(grid.len(), case.exec, |i| dc_sequences(m, grid[i], &dc.setup, DEFAULT_MAX_K));
        for tr in &traces {
            let ks = stall_index(tr);
            for k in 1..tr.d.len().saturating_sub(1) {
                let (dn, cn) = (tr.d[k + 1], tr.c[k + 1]);
                let ok = if k < ks { dn < tr.d[k] && cn > tr.c[k] } else { dn <= tr.d[k] && cn >= tr.c[k] };
                t.check(ok, || format!("{}: beta={} k={k} d={:e}->{dn:e} c={:e}->{cn:e}", dc.label, tr.beta, tr.d[k], tr.c[k]));
            }
            let (dh, ch) = (tr.d_hat, tr.c_hat);
            let last = tr.d.len() - 1;
            t.check(dh <= tr.d[last] + 1e-9 && ch >= tr.c[last] - 1e-9, || {
                format!("{}: beta={} limits ({dh:e}, {ch:e}) inside the last pair", dc.label, tr.beta)
            });
        }
    }
}

fn dc_beta_monotonicity(case: &Case, t: &mut Tally) {
    let m = &case.map;
    let cases = or_note!(t, case, case.dc_cases());
    for dc in cases {
        let span = (dc.upper - dc.lower).max(0.2 * (1.0 - dc.lower));
        let grid: Vec<f64> = (0..20).map(|i| dc.lower + span * (i as f64 + 0.5) / 20.0).collect();
        let traces = map_range(grid.len(), case.exec, |i| dc_sequences(m, grid[i], &dc.setup, DEFAULT_MAX_K));
        for w in traces.windows(2) {
            let (lo, hi) = (&w[0], &w[1]);
            let moved = |tr: &DcTrace, k: usize| tr.d[k] < tr.d[k - 1] && tr.c[k] > tr.c[k - 1];
            let n = lo.d.len().min(hi.d.len());
            for k in 1..n {
                if !(moved(lo, k) && moved(hi, k)) {
                    continue;
                }
                let ok = lo.d[k] > hi.d[k] && hi.c[k] > lo.c[k];
                t.check(ok, || {
                    format!(
                        "{}: k={k} beta {} vs {}: d {:e} vs {:e}, c {:e} vs {:e}",
                        dc.label, lo.beta, hi.beta, lo.d[k], hi.d[k], lo.c[k], hi.c[k]
                    )
                });
            }
        }
    }
}

/// Two-cycles that straddle the target region of a recursion.
fn outer_cycles(m: &MapSpec, beta: f64, dc: &DcCase) -> Vec<(f64, f64)> {
    find_two_cycles(m, beta, (dc.setup.left, dc.setup.right))
        .into_iter()
        .filter(|(p, q)| *p < dc.inner.0 && *q > dc.inner.1)
        .collect()
}

fn k0_dichotomy(case: &Case, t: &mut Tally) {
    let m = &case.map;
    let cases = or_note!(t, case, case.dc_cases());
    if cases.is_empty() {
        t.notes.push(format!("{}: no block carries a recursion, nothing to check", case.name()));
    }
    for dc in cases {
        let gap = dc.upper - dc.lower > 1e-4;
        let mut grid: Vec<f64> = Vec::new();
        if gap {
            grid.extend((0..10).map(|i| dc.lower + (dc.upper - dc.lower) * (i as f64 + 0.5) / 10.0));
        }
        let start = dc.upper + 5e-3;
        grid.extend((0..6).map(|i| start + (0.999 - start) * i as f64 / 5.0));
        let rows = map_range(grid.len(), case.exec, |i| {
            let beta = grid[i];
            let tr = dc_sequences(m, beta, &dc.setup, DEFAULT_MAX_K);
            (beta, tr.k0, outer_cycles(m, beta, &dc))
        });
        let mut any_cycle_below = false;
        for (beta, k0, cycles) in &rows {
            let below = *beta < dc.upper;
            if below && !cycles.is_empty() {
                any_cycle_below = true;
            }
            let consistent = match k0 {
                K0::Finite(_) => cycles.is_empty(),
                K0::Infinite => !cycles.is_empty(),
                K0::Indeterminate => false,
            };
            t.check(consistent, || format!("{}: beta={beta} k0={k0:?} outer two-cycles={cycles:?}", dc.label));
            if !below {
                t.check(cycles.is_empty(), || format!("{}: beta={beta} above {} still has {cycles:?}", dc.label, dc.upper));
            }
        }
        if gap {
            t.check(any_cycle_below, || format!("{}: no two-cycle found below {}", dc.label, dc.upper));
        }
    }
}

fn run_frequencies(opts: &VerifyOptions, t: &mut Tally) {
    let n = opts.noise_samples;
    let cases: [(NoiseKind, f64, usize); 5] = [
        (NoiseKind::Bernoulli, 0.1, 5),
        (NoiseKind::Uniform, 0.1, 3),
        (NoiseKind::Uniform, 0.2, 0),
        (NoiseKind::TruncatedGaussian(0.5), 0.3, 2),
        (NoiseKind::Uniform, 0.5, 2),
    ];
    for (i, (kind, eps, j)) in cases.iter().enumerate() {
        let s = high_noise_run_stats(*kind, *eps, *j, n, opts.seed.wrapping_add(i as u64));
        let z = s.z_score();
        t.check(z.abs() <= 3.0, || {
            format!("{kind} eps={eps} J={j}: frequency {:.6} expected {:.6} z={z:.2}", s.frequency, s.expected)
        });
        t.notes.push(format!("{kind} eps={eps} J={j}: frequency {:.6} expected {:.6} z={z:.2}", s.frequency, s.expected));
    }
}

fn continuity(case: &Case, t: &mut Tally) {
    if !matches!(case.map.kind, MapKind::Piecewise(_)) {
        return;
    }
    for k in continuity_audit(&case.map, 1e-9) {
        t.check(false, || format!("{}: jump at x={} ({} vs {})", case.name(), k.knot, k.left_value, k.right_value));
    }
    t.checks += 1;
}

fn sign_pattern(case: &Case, t: &mut Tally) {
    let a = or_note!(t, case, case.analysis());
    match sign_pattern_check(a) {
        Ok(_) => t.check(true, String::new),
        Err(v) => t.check(false, || format!("{}: interval {} expected {:?} found {:?}", case.name(), v.interval, v.expected, v.found)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_is_rejected() {
        let opts = VerifyOptions { only: vec!["nope".into()], ..Default::default() };
        assert!(matches!(run_verify(default_maps(), &opts), Err(Error::Parameter(_))));
    }

    #[test]
    fn cheap_suites_pass_on_corpus() {
        let opts = VerifyOptions {
            only: vec!["endpoints".into(), "ordering".into(), "reparametrization".into(), "sign-pattern".into()],
            ..Default::default()
        };
        let r = run_verify(default_maps(), &opts).unwrap();
        assert_eq!(r.suites.len(), 4);
        assert!(r.all_passed, "{}", r.text_summary());
    }
}
