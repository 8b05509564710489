//! Noise-perturbed control `alpha_n = alpha + ell * xi_n` with bounded i.i.d. `xi_n`.

use crate::control::{run_orbit, OrbitRecord, CONVERGE_WINDOW};
use crate::error::{Error, Result};
use crate::map::MapSpec;
use crate::par::{map_range, Exec};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize, Serializer};
use std::fmt;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseKind {
    /// `+1` or `-1` with probability one half.
    Bernoulli,
    Uniform,
    /// Normal with this standard deviation, clipped to `[-1, 1]`.
    TruncatedGaussian(f64),
}

impl NoiseKind {
    pub fn parse(s: &str) -> Result<NoiseKind> {
        let t = s.trim().to_ascii_lowercase();
        if let Some(sd) = t.strip_prefix("gaussian:").or_else(|| t.strip_prefix("truncated-gaussian:")) {
            let sd: f64 = sd.parse().map_err(|_| Error::Parameter(format!("bad standard deviation in {s:?}")))?;
            if !(sd > 0.0) {
                return Err(Error::Parameter(format!("standard deviation must be positive, got {sd}")));
            }
            return Ok(NoiseKind::TruncatedGaussian(sd));
        }
        match t.as_str() {
            "bernoulli" | "pm1" => Ok(NoiseKind::Bernoulli),
            "uniform" => Ok(NoiseKind::Uniform),
            _ => Err(Error::Parameter(format!("unknown noise kind {s:?} (bernoulli, uniform, gaussian:<sd>)"))),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            NoiseKind::Bernoulli => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            NoiseKind::Uniform => rng.gen_range(-1.0..=1.0),
            NoiseKind::TruncatedGaussian(sd) => {
                let n = Normal::new(0.0, *sd).expect("positive sd");
                n.sample(rng).clamp(-1.0, 1.0)
            }
        }
    }

    /// `P(xi >= t)` for `t` in `(-1, 1]`.
    pub fn upper_tail(&self, t: f64) -> f64 {
        match self {
            NoiseKind::Bernoulli => {
                if t <= -1.0 {
                    1.0
                } else if t <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
            NoiseKind::Uniform => ((1.0 - t) / 2.0).clamp(0.0, 1.0),
            NoiseKind::TruncatedGaussian(sd) => {
                if t > 1.0 {
                    return 0.0;
                }
                if t <= -1.0 {
                    return 1.0;
                }
                // Mass of N(0, sd) on [t, inf); the clipped tail lands on 1.
                let z = t / sd;
                0.5 - std_normal_integral(0.0, z)
            }
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseKind::Bernoulli => write!(f, "bernoulli"),
            NoiseKind::Uniform => write!(f, "uniform"),
            NoiseKind::TruncatedGaussian(sd) => write!(f, "gaussian:{sd}"),
        }
    }
}

fn std_normal_integral(a: f64, b: f64) -> f64 {
    let n = 2000;
    let h = (b - a) / n as f64;
    let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = pdf(a) + pdf(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * pdf(a + h * i as f64);
    }
    s * h / 3.0
}

/// Seed of run `index` under `master`: the first word of the ChaCha8 stream `index`.
pub fn run_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

pub fn sample_noise(kind: NoiseKind, seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| kind.sample(&mut rng)).collect()
}

/// Orbit of `x_{n+1} = G(alpha + ell * xi_{n+1}, x_n)`.
pub fn stoch_orbit(map: &MapSpec, alpha: f64, ell: f64, noise: NoiseKind, x0: f64, horizon: usize, seed: u64) -> Result<OrbitRecord> {
    check_alpha_ell(alpha, ell)?;
    if horizon < 1 {
        return Err(Error::Parameter("horizon must be at least 1".into()));
    }
    map.eval(x0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(run_orbit(map, x0, horizon, || alpha + ell * noise.sample(&mut rng)))
}

pub fn check_alpha_ell(alpha: f64, ell: f64) -> Result<()> {
    let ok = if ell == 0.0 {
        (0.0..1.0).contains(&alpha)
    } else {
        ell > 0.0 && alpha - ell > 0.0 && alpha + ell < 1.0
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Parameter(format!("need 0 < alpha - ell and alpha + ell < 1, got alpha = {alpha}, ell = {ell}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    ConvergedTo(f64),
    TwoCycleLock(f64, f64),
    /// Number of interval changes in the final half.
    Circulating(usize),
    Escaped,
    Undecided,
}

impl Outcome {
    pub fn tag(&self) -> &'static str {
        match self {
            Outcome::ConvergedTo(_) => "converged",
            Outcome::TwoCycleLock(..) => "two-cycle",
            Outcome::Circulating(_) => "circulating",
            Outcome::Escaped => "escaped",
            Outcome::Undecided => "undecided",
        }
    }

    pub fn limit_field(&self) -> String {
        match self {
            Outcome::ConvergedTo(k) => format!("{k}"),
            Outcome::TwoCycleLock(p, q) => format!("{p}|{q}"),
            _ => String::new(),
        }
    }

    pub fn is_converged(&self) -> bool {
        matches!(self, Outcome::ConvergedTo(_))
    }
}

impl Serialize for Outcome {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}:{}", self.tag(), self.limit_field()))
    }
}

const TAIL: usize = 100;

/// Classify the end of an orbit against the equilibria `eq` (sorted).
pub fn classify_outcome(map: &MapSpec, orbit: &OrbitRecord, eq: &[f64], tol: f64) -> Outcome {
    if orbit.escaped {
        return Outcome::Escaped;
    }
    let s = &orbit.states;
    let keep = if orbit.converged { CONVERGE_WINDOW } else { TAIL };
    let tail = &s[s.len().saturating_sub(keep)..];
    let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let last = orbit.last();
    if hi - lo < tol {
        if let Some(k) = eq.iter().copied().find(|k| (last - k).abs() < tol && tail.iter().all(|x| (x - k).abs() < tol)) {
            return Outcome::ConvergedTo(k);
        }
        if (map.eval_or_nan(last) - last).abs() <= 1e-8 {
            return Outcome::ConvergedTo(last);
        }
    }
    if tail.len() >= 4 {
        let spread = |it: &mut dyn Iterator<Item = f64>| {
            let v: Vec<f64> = it.collect();
            let a = v.iter().copied().fold(f64::INFINITY, f64::min);
            let b = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (a, b, 0.5 * (a + b))
        };
        let (e0, e1, ce) = spread(&mut tail.iter().copied().step_by(2));
        let (o0, o1, co) = spread(&mut tail.iter().copied().skip(1).step_by(2));
        if e1 - e0 < tol && o1 - o0 < tol && (ce - co).abs() > tol {
            return Outcome::TwoCycleLock(ce.min(co), ce.max(co));
        }
    }
    let half = &s[s.len() / 2..];
    let idx = |x: f64| eq.partition_point(|k| *k < x);
    let changes = half.windows(2).filter(|w| idx(w[0]) != idx(w[1])).count();
    if changes >= 10 {
        return Outcome::Circulating(changes);
    }
    Outcome::Undecided
}

/// Wilson score interval at 95%.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let center = (p + z * z / (2.0 * nf)) / denom;
    let rad = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    ((center - rad).max(0.0), (center + rad).min(1.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleConfig {
    pub alpha: f64,
    pub ell: f64,
    pub noise: NoiseKind,
    pub runs: usize,
    pub horizon: usize,
    pub tol: f64,
    pub master_seed: u64,
    /// Initial values are uniform on this interval unless `x0_fixed` is set.
    pub x0_range: (f64, f64),
    pub x0_fixed: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub run_id: usize,
    pub seed: u64,
    pub x0: f64,
    pub outcome: Outcome,
    pub steps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleResult {
    pub config: EnsembleConfig,
    pub runs: Vec<RunRecord>,
    pub converged: usize,
    pub fraction: f64,
    pub wilson: (f64, f64),
}

impl EnsembleResult {
    /// CSV with columns `run_id, seed, outcome, limit, steps`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["run_id", "seed", "outcome", "limit", "steps"])?;
        for r in &self.runs {
            wr.write_record([r.run_id.to_string(), r.seed.to_string(), r.outcome.tag().to_string(), r.outcome.limit_field(), r.steps.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub fn run_ensemble(map: &MapSpec, eq: &[f64], cfg: &EnsembleConfig, exec: Exec) -> Result<EnsembleResult> {
    check_alpha_ell(cfg.alpha, cfg.ell)?;
    if cfg.runs == 0 {
        return Err(Error::Parameter("at least one run is needed".into()));
    }
    let (a, b) = cfg.x0_range;
    if cfg.x0_fixed.is_none() && !(b > a) {
        return Err(Error::Parameter(format!("empty initial-value range ({a}, {b})")));
    }
    let runs: Vec<Result<RunRecord>> = map_range(cfg.runs, exec, |i| {
        let seed = run_seed(cfg.master_seed, i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = cfg.x0_fixed.unwrap_or_else(|| a + (b - a) * rng.gen::<f64>());
        let noise_seed = rng.next_u64();
        let orbit = stoch_orbit(map, cfg.alpha, cfg.ell, cfg.noise, x0, cfg.horizon, noise_seed)?;
        let outcome = classify_outcome(map, &orbit, eq, cfg.tol);
        Ok(RunRecord { run_id: i, seed, x0, outcome, steps: orbit.steps() })
    });
    let runs: Vec<RunRecord> = runs.into_iter().collect::<Result<_>>()?;
    let converged = runs.iter().filter(|r| r.outcome.is_converged()).count();
    Ok(EnsembleResult {
        config: cfg.clone(),
        fraction: converged as f64 / runs.len() as f64,
        wilson: wilson_interval(converged, runs.len()),
        converged,
        runs,
    })
}

/// Number of states outside `[lo, hi]` after the orbit first enters it.
pub fn trap_violations(orbit: &OrbitRecord, lo: f64, hi: f64) -> usize {
    let inside = |x: f64| x >= lo && x <= hi;
    match orbit.states.iter().position(|&x| inside(x)) {
        None => 0,
        Some(i) => orbit.states[i..].iter().filter(|&&x| !inside(x)).count(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunStats {
    pub window: usize,
    pub windows: usize,
    pub hits: usize,
    pub frequency: f64,
    pub expected: f64,
    pub std_error: f64,
}

impl RunStats {
    pub fn z_score(&self) -> f64 {
        (self.frequency - self.expected) / self.std_error
    }
}

/// Frequency of windows of `J` consecutive draws that all satisfy `xi >= 1 - eps`.
/// `J = 0` counts single draws.
pub fn high_noise_run_stats(kind: NoiseKind, eps: f64, j: usize, n: usize, seed: u64) -> RunStats {
    let w = j.max(1);
    let xs = sample_noise(kind, seed, n);
    let hit: Vec<bool> = xs.iter().map(|&x| x >= 1.0 - eps).collect();
    let windows = n.saturating_sub(w) + 1;
    let mut run = 0usize;
    let mut hits = 0usize;
    for (i, &h) in hit.iter().enumerate() {
        run = if h { run + 1 } else { 0 };
        if i + 1 >= w && run >= w {
            hits += 1;
        }
    }
    let p = kind.upper_tail(1.0 - eps);
    let q = p.powi(w as i32);
    let nf = windows as f64;
    let mut var = nf * q * (1.0 - q);
    for k in 1..w {
        var += 2.0 * (nf - k as f64) * (p.powi((w + k) as i32) - q * q);
    }
    RunStats {
        window: w,
        windows,
        hits,
        frequency: hits as f64 / nf,
        expected: q,
        std_error: var.max(0.0).sqrt() / nf,
    }
}

/// Pairs `(alpha, ell)` with `(lower + target)/2 < alpha < alpha_hi` and
/// `target - alpha < ell < min(alpha - lower, cap - alpha)`.
#[derive(Debug, Clone, Serialize)]
pub struct AdmissibleRegion {
    pub kind: String,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub lower: f64,
    pub target: f64,
    pub cap: f64,
}

impl AdmissibleRegion {
    /// Region from a four-equilibrium analysis: `alpha0`, `underline alpha`.
    pub fn four_equilibrium(alpha0: f64, ualpha: f64) -> AdmissibleRegion {
        if ualpha - alpha0 < 1e-4 {
            let mut r = AdmissibleRegion::deterministic(ualpha);
            r.kind = "noise unnecessary".into();
            return r;
        }
        AdmissibleRegion {
            kind: "two-sided".into(),
            alpha_lo: 0.5 * (alpha0 + ualpha),
            alpha_hi: ualpha,
            lower: alpha0,
            target: ualpha,
            cap: 1.0,
        }
    }

    pub fn two_sided(lower: f64, target: f64, alpha_hi: f64, cap: f64) -> AdmissibleRegion {
        AdmissibleRegion { kind: "two-sided".into(), alpha_lo: 0.5 * (lower + target), alpha_hi, lower, target, cap }
    }

    /// Any `alpha > bound` works without noise; noise must keep `alpha - ell > bound`.
    pub fn deterministic(bound: f64) -> AdmissibleRegion {
        AdmissibleRegion { kind: "deterministic".into(), alpha_lo: bound, alpha_hi: 1.0, lower: bound, target: bound, cap: 1.0 }
    }

    pub fn ell_range(&self, alpha: f64) -> (f64, f64) {
        ((self.target - alpha).max(0.0), (alpha - self.lower).min(self.cap - alpha))
    }

    pub fn contains(&self, alpha: f64, ell: f64) -> bool {
        let (a, b) = self.ell_range(alpha);
        alpha > self.alpha_lo && alpha < self.alpha_hi && ell > a && ell < b
    }

    /// Midpoint `alpha`, then midpoint `ell` for it.
    pub fn sample(&self) -> (f64, f64) {
        let alpha = 0.5 * (self.alpha_lo + self.alpha_hi);
        let (a, b) = self.ell_range(alpha);
        (alpha, 0.5 * (a + b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{pbc_orbit, ControlSchedule};
    use crate::corpus;

    #[test]
    fn noise_is_bounded_and_reproducible() {
        for kind in [NoiseKind::Bernoulli, NoiseKind::Uniform, NoiseKind::TruncatedGaussian(0.7)] {
            let a = sample_noise(kind, 11, 10_000);
            assert!(a.iter().all(|x| (-1.0..=1.0).contains(x)));
            assert_eq!(a, sample_noise(kind, 11, 10_000));
        }
    }

    #[test]
    fn zero_noise_matches_deterministic_orbit() {
        let m = corpus::ricker2();
        let s = stoch_orbit(&m, 0.3, 0.0, NoiseKind::Uniform, 0.7, 400, 5).unwrap();
        let d = pbc_orbit(&m, &ControlSchedule::Constant(0.3), 0.7, 400).unwrap();
        assert_eq!(s.states, d.states);
    }

    #[test]
    fn run_seeds_differ() {
        let a: Vec<u64> = (0..50).map(|i| run_seed(9, i)).collect();
        let mut b = a.clone();
        b.sort();
        b.dedup();
        assert_eq!(b.len(), 50);
        assert_eq!(run_seed(9, 3), a[3]);
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(200, 200);
        assert!(lo > 0.98 && hi == 1.0);
        let (lo, hi) = wilson_interval(50, 100);
        assert!(lo < 0.5 && hi > 0.5);
    }

    #[test]
    fn region_arithmetic() {
        let r = AdmissibleRegion::four_equilibrium(0.54, 0.604);
        assert!((r.alpha_lo - 0.572).abs() < 1e-12);
        let (a, b) = r.ell_range(0.59);
        assert!((a - 0.014).abs() < 1e-12 && (b - 0.05).abs() < 1e-12);
        let (al, l) = r.sample();
        assert!(r.contains(al, l));
        assert!(al + l > 0.604 && al - l > 0.54);
        assert_eq!(AdmissibleRegion::four_equilibrium(0.5, 0.5).kind, "noise unnecessary");
    }

    #[test]
    fn gaussian_tail_matches_sampling() {
        let k = NoiseKind::TruncatedGaussian(0.5);
        let p = k.upper_tail(0.9);
        let xs = sample_noise(k, 3, 200_000);
        let f = xs.iter().filter(|&&x| x >= 0.9).count() as f64 / xs.len() as f64;
        assert!((p - f).abs() < 4.0 * (p * (1.0 - p) / xs.len() as f64).sqrt(), "{p} {f}");
    }
}
