//! Stabilization thresholds for maps with four equilibria `K_0 < K_1 < K_2 < K_3`
//! (and an optional bound `K_4 <= inf`).
//!
//! `alpha0` makes `[K_1 - delta, K_3 + delta]` a trap, the `d_k`/`c_k` recursion
//! grows that trap, and `underline_alpha` is the smallest control for which
//! the recursion no longer ends on a two-cycle.

use crate::control::g_of;
use crate::error::{Error, Result};
use crate::extremum::{golden_max, interval_extremum, max_on, min_on, ExtremumMode};
use crate::map::{one_sided_lipschitz, EquilibriumAnalysis, MapSpec, Side};
use crate::par::{map_range, Exec};
use crate::serde_inf;
use serde::{Serialize, Serializer};
use std::io::Write;

pub const EXTREMUM_GRID: usize = 10_000;
const SEARCH_GRID: usize = 2_000;

/// The four equilibria plus the bound `K_4` (possibly `+inf`).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FourEq {
    pub k: [f64; 4],
    #[serde(serialize_with = "serde_inf::f64_inf")]
    pub k4: f64,
    /// Stand-in for `K_4` when it is infinite.
    pub truncation: f64,
}

impl FourEq {
    pub fn from_analysis(a: &EquilibriumAnalysis) -> Result<FourEq> {
        if a.j0() != 4 || a.equilibria.len() < 4 {
            return Err(Error::Analysis(format!(
                "four-equilibrium analysis needs K_0..K_3 plus a bound K_4, found j0 = {}",
                a.j0()
            )));
        }
        Ok(FourEq {
            k: [a.k(0), a.k(1), a.k(2), a.k(3)],
            k4: a.k(4),
            truncation: a.truncation,
        })
    }

    pub fn min_gap(&self) -> f64 {
        let mut g = (self.k[1] - self.k[0]).min(self.k[2] - self.k[1]).min(self.k[3] - self.k[2]);
        if self.k4.is_finite() {
            g = g.min(self.k4 - self.k[3]);
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DeltaPolicy {
    /// Trap-based choice when both outer one-sided constants are finite, strict otherwise.
    Auto,
    /// Largest delta for which the Lipschitz bound extends past `K_1` and `K_3`.
    Strict,
    /// Delta minimizing `alpha0` among candidates in `(0, 0.95 * min gap)`.
    Trap,
    Fixed(f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct LDeltaFit {
    #[serde(rename = "L")]
    pub l: f64,
    pub delta: f64,
    /// Largest ratio on the inner intervals `(K_1, K_2)` and `(K_2, K_3)`.
    pub l_inner: f64,
    pub policy: String,
    /// Largest ratio on `(K_1 - delta, K_1)` and `(K_3, K_3 + delta)`.
    pub outer_ratio: f64,
    /// Whether `outer_ratio <= L`.
    pub extension_bound_holds: bool,
    #[serde(serialize_with = "serde_inf::f64_inf")]
    pub outer_left_constant: f64,
    #[serde(serialize_with = "serde_inf::f64_inf")]
    pub outer_right_constant: f64,
    pub note: Option<String>,
}

fn abs_ratio_sup(map: &MapSpec, k: f64, a: f64, b: f64) -> f64 {
    // sup of |g(x) - k| / |x - k| over (a, b), with b or a equal to k.
    let f = |x: f64| {
        let v = (map.eval_or_nan(x) - k).abs() / (x - k).abs();
        if v.is_finite() {
            v
        } else {
            f64::NEG_INFINITY
        }
    };
    let n = 4000;
    let mut best = (a, f64::NEG_INFINITY);
    for i in 1..n {
        let x = a + (b - a) * i as f64 / n as f64;
        let v = f(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    let step = (b - a) / n as f64;
    let (_, v) = golden_max(&f, (best.0 - step).max(a + 1e-12 * step), (best.0 + step).min(b - 1e-12 * step), 1e-13);
    let mut sup = best.1.max(v);
    let far = (b - a).abs();
    let mut h = far;
    while h >= 1e-10 {
        let x = if (k - a).abs() < (k - b).abs() { k + h } else { k - h };
        if x > a && x < b {
            sup = sup.max(f(x));
        }
        h *= 0.8;
    }
    sup
}

/// Cumulative maximum of the outer ratios as a function of distance from `K_1`/`K_3`.
fn outer_profile(map: &MapSpec, eq: &FourEq, max_delta: f64, n: usize) -> Vec<(f64, f64)> {
    let (k1, k3) = (eq.k[1], eq.k[3]);
    let mut out = Vec::with_capacity(n);
    let mut run = 0.0f64;
    let mut hs: Vec<f64> = Vec::new();
    let mut h = max_delta;
    while h >= 1e-10 {
        hs.push(h);
        h *= 0.8;
    }
    hs.extend((1..=n).map(|i| max_delta * i as f64 / n as f64));
    hs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    for h in hs {
        let l = (map.eval_or_nan(k1 - h) - k1).abs() / h;
        let r = (k3 - map.eval_or_nan(k3 + h)).abs() / h;
        for v in [l, r] {
            if v.is_finite() {
                run = run.max(v);
            } else {
                run = f64::INFINITY;
            }
        }
        out.push((h, run));
    }
    out
}

fn outer_ratio_at(profile: &[(f64, f64)], delta: f64) -> f64 {
    if delta <= 0.0 {
        return 0.0;
    }
    let i = profile.partition_point(|(h, _)| *h <= delta);
    if i == 0 {
        profile.first().map(|p| p.1).unwrap_or(0.0)
    } else {
        profile[i - 1].1
    }
}

/// Fit `(L, delta)` for the four-equilibrium case.
pub fn fit_l_delta(map: &MapSpec, eq: &FourEq, policy: DeltaPolicy) -> Result<LDeltaFit> {
    let [k0, k1, k2, k3] = eq.k;
    let l_inner = abs_ratio_sup(map, k1, k1, k2).max(abs_ratio_sup(map, k3, k2, k3));
    let outer_left = one_sided_lipschitz(map, k1, Side::Left, (k0, k1))?;
    let outer_right = one_sided_lipschitz(map, k3, Side::Right, (k3, if eq.k4.is_finite() { eq.k4 } else { eq.truncation }))?;
    let min_gap = eq.min_gap();
    let profile = outer_profile(map, eq, min_gap, 4000);
    let mut note = None;
    if l_inner <= 1.0 {
        note = Some(format!("inner ratio {l_inner:.6} <= 1: the equilibria are already stable"));
    }
    let resolved = match policy {
        DeltaPolicy::Auto => {
            if outer_left.is_finite() && outer_right.is_finite() {
                DeltaPolicy::Trap
            } else {
                DeltaPolicy::Strict
            }
        }
        p => p,
    };
    let inflated = 1.01 * l_inner;
    let (l, delta, name) = match resolved {
        DeltaPolicy::Strict => {
            let mut delta = 0.0;
            for &(h, run) in &profile {
                if h >= min_gap {
                    break;
                }
                if run <= inflated {
                    delta = h;
                } else {
                    break;
                }
            }
            if delta < 1e-9 {
                delta = 0.0;
            }
            let l = if delta > 0.0 { inflated } else { l_inner };
            (l, delta, "strict")
        }
        DeltaPolicy::Fixed(d) => {
            if !(0.0..min_gap).contains(&d) {
                return Err(Error::Parameter(format!("delta {d} outside [0, {min_gap})")));
            }
            (if d > 0.0 { inflated } else { l_inner }, d, "fixed")
        }
        DeltaPolicy::Trap => {
            let l = inflated;
            let n = 40;
            let cands: Vec<f64> = (1..=n).map(|i| 0.95 * min_gap * i as f64 / n as f64).collect();
            let vals = map_range(cands.len(), Exec::Parallel, |i| {
                alpha0_for(map, eq, l, cands[i], SEARCH_GRID).map(|r| r.value).unwrap_or(f64::INFINITY)
            });
            let mut best = (0.0, l / (l + 1.0));
            for (d, v) in cands.iter().zip(&vals) {
                if *v <= best.1 + 1e-9 {
                    best = (*d, v.min(best.1));
                }
            }
            if best.0 == 0.0 {
                (l_inner, 0.0, "trap")
            } else {
                (l, best.0, "trap")
            }
        }
        DeltaPolicy::Auto => unreachable!(),
    };
    let outer_ratio = outer_ratio_at(&profile, delta);
    Ok(LDeltaFit {
        l,
        delta,
        l_inner,
        policy: name.to_string(),
        outer_ratio,
        extension_bound_holds: outer_ratio <= l,
        outer_left_constant: outer_left,
        outer_right_constant: outer_right,
        note,
    })
}

/// Result of an infimum or supremum search over a control interval.
#[derive(Debug, Clone, Serialize)]
pub struct ThresholdSearch {
    pub value: Option<f64>,
    /// The qualifying set looked like an up-set (down-set for suprema) on the scan.
    pub monotone: bool,
    /// The extreme was attained at the open end of the interval.
    pub at_open_end: bool,
}

/// `inf { beta in (lo, hi) : pred(beta) }` from an `n`-point scan plus bisection.
pub fn infimum_search(pred: &(impl Fn(f64) -> bool + Sync), lo: f64, hi: f64, n: usize, tol: f64, exec: Exec) -> ThresholdSearch {
    let pts: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let probe = |b: f64| if b <= lo { lo + (hi - lo) * 1e-9 } else { b };
    let flags = map_range(pts.len(), exec, |i| pred(probe(pts[i])));
    let first = match flags.iter().position(|f| *f) {
        None => return ThresholdSearch { value: None, monotone: true, at_open_end: false },
        Some(i) => i,
    };
    let monotone = flags[first..].iter().all(|f| *f);
    if first == 0 {
        return ThresholdSearch { value: Some(lo), monotone, at_open_end: true };
    }
    let (mut a, mut b) = (pts[first - 1], pts[first]);
    while b - a > tol {
        let m = 0.5 * (a + b);
        if pred(m) {
            b = m;
        } else {
            a = m;
        }
    }
    ThresholdSearch { value: Some(b), monotone, at_open_end: false }
}

/// `sup { beta in (lo, hi) : pred(beta) }` from an `n`-point scan plus bisection.
pub fn supremum_search(pred: &(impl Fn(f64) -> bool + Sync), lo: f64, hi: f64, n: usize, tol: f64, exec: Exec) -> ThresholdSearch {
    let pts: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let probe = |b: f64| if b >= hi { hi - (hi - lo) * 1e-9 } else if b <= lo { lo + (hi - lo) * 1e-9 } else { b };
    let flags = map_range(pts.len(), exec, |i| pred(probe(pts[i])));
    let last = match flags.iter().rposition(|f| *f) {
        None => return ThresholdSearch { value: None, monotone: true, at_open_end: false },
        Some(i) => i,
    };
    let monotone = flags[..=last].iter().all(|f| *f);
    if last == n {
        return ThresholdSearch { value: Some(hi), monotone, at_open_end: true };
    }
    let (mut a, mut b) = (pts[last], pts[last + 1]);
    while b - a > tol {
        let m = 0.5 * (a + b);
        if pred(m) {
            a = m;
        } else {
            b = m;
        }
    }
    ThresholdSearch { value: Some(a), monotone, at_open_end: false }
}

#[derive(Debug, Clone, Serialize)]
pub struct Alpha0 {
    pub value: f64,
    pub monotone: bool,
}

fn trap_predicate(map: &MapSpec, eq: &FourEq, delta: f64, beta: f64, n: usize) -> bool {
    let (a, b) = (eq.k[1] - delta, eq.k[3] + delta);
    let f = |x: f64| g_of(map, beta, x);
    min_on(&f, a, b, n) > a && max_on(&f, a, b, n) < b
}

fn alpha0_for(map: &MapSpec, eq: &FourEq, l: f64, delta: f64, n: usize) -> Result<Alpha0> {
    if delta == 0.0 {
        return Ok(Alpha0 { value: l / (l + 1.0), monotone: true });
    }
    let lo = ((l - 1.0) / (l + 1.0)).max(0.0);
    let s = infimum_search(&|b| trap_predicate(map, eq, delta, b, n), lo, 1.0 - 1e-9, 200, 1e-6, Exec::Sequential);
    match s.value {
        Some(v) => Ok(Alpha0 { value: v, monotone: s.monotone }),
        None => Err(Error::Analysis(format!("no control in ({lo}, 1) makes [K1 - {delta}, K3 + {delta}] invariant"))),
    }
}

/// `alpha0`: `L/(L+1)` when `delta = 0`, otherwise the smallest control keeping
/// `[K_1 - delta, K_3 + delta]` invariant.
pub fn alpha0_lower(map: &MapSpec, eq: &FourEq, fit: &LDeltaFit) -> Result<Alpha0> {
    alpha0_for(map, eq, fit.l, fit.delta, EXTREMUM_GRID)
}

/// Sub-interval of delta values on which `beta` satisfies the two trap inequalities.
#[derive(Debug, Clone, Serialize)]
pub struct DeltaInterval {
    pub lo: f64,
    pub hi: f64,
    /// Largest outer ratio over the interval's upper end.
    pub outer_ratio_at_hi: f64,
}

/// For a fixed `beta`, the delta values for which
/// `min_[K1-delta, K2] G > K1 - delta` and `max_[K2, K3+delta] G < K3 + delta`.
pub fn certify_alpha0(map: &MapSpec, eq: &FourEq, beta: f64, n: usize) -> Vec<DeltaInterval> {
    let [_, k1, k2, k3] = eq.k;
    let gap = eq.min_gap();
    let profile = outer_profile(map, eq, gap, 2000);
    let f = |x: f64| g_of(map, beta, x);
    let ds: Vec<f64> = (1..n).map(|i| gap * i as f64 / n as f64).collect();
    let ok = map_range(ds.len(), Exec::Parallel, |i| {
        let d = ds[i];
        min_on(&f, k1 - d, k2, 4000) > k1 - d && max_on(&f, k2, k3 + d, 4000) < k3 + d
    });
    let mut out = Vec::new();
    let mut i = 0;
    while i < ds.len() {
        if ok[i] {
            let s = i;
            while i + 1 < ds.len() && ok[i + 1] {
                i += 1;
            }
            out.push(DeltaInterval { lo: ds[s], hi: ds[i], outer_ratio_at_hi: outer_ratio_at(&profile, ds[i]) });
        }
        i += 1;
    }
    out
}

/// Where the d/c recursion runs: `d` moves left from `d0` toward `left`,
/// `c` moves right from `c0` toward `right` (`g_m`).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DcSetup {
    pub left: f64,
    pub d0: f64,
    pub c0: f64,
    pub right: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum K0 {
    Finite(usize),
    /// The recursion converges to a two-cycle.
    Infinite,
    Indeterminate,
}

impl Serialize for K0 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            K0::Finite(k) => s.serialize_u64(*k as u64),
            K0::Infinite => s.serialize_str("inf"),
            K0::Indeterminate => s.serialize_str("indeterminate"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DcTrace {
    pub beta: f64,
    pub d: Vec<f64>,
    pub c: Vec<f64>,
    pub k0: K0,
    pub d_hat: f64,
    pub c_hat: f64,
    /// How the limits were certified: "stall", "cycle-identity" or "two-cycle".
    pub certificate: String,
}

impl DcTrace {
    /// CSV with columns `k, d_k, c_k`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["k", "d_k", "c_k"])?;
        for (k, (d, c)) in self.d.iter().zip(&self.c).enumerate() {
            wr.write_record([k.to_string(), format!("{d}"), format!("{c}")])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Scan from `start` toward `end` for the first point where `crossed` holds,
/// with steps growing geometrically up to `max_step`; then bisect the bracket.
fn first_crossing(f: &impl Fn(f64) -> f64, start: f64, end: f64, crossed: &impl Fn(f64) -> bool, max_step: f64) -> Option<f64> {
    let dir = if end >= start { 1.0 } else { -1.0 };
    let span = (end - start).abs();
    if span == 0.0 {
        return None;
    }
    let mut step = (1e-13 * start.abs().max(1.0)).min(max_step);
    let mut prev = start;
    loop {
        let mut x = prev + dir * step;
        let last = (x - start).abs() >= span;
        if last {
            x = end;
        }
        if crossed(f(x)) {
            let (mut a, mut b) = (prev, x);
            for _ in 0..200 {
                if (b - a).abs() <= 1e-15 * a.abs().max(1.0) {
                    break;
                }
                let m = 0.5 * (a + b);
                if crossed(f(m)) {
                    b = m;
                } else {
                    a = m;
                }
            }
            return Some(b);
        }
        if last {
            return None;
        }
        prev = x;
        step = (step * 2.0).min(max_step);
    }
}

/// The nested sequences `d_k` (decreasing) and `c_k` (increasing).
pub fn dc_sequences(map: &MapSpec, beta: f64, setup: &DcSetup, max_k: usize) -> DcTrace {
    let f = |x: f64| {
        let v = g_of(map, beta, x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let fmin = |x: f64| {
        let v = g_of(map, beta, x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let max_step = (setup.right - setup.left).abs() / EXTREMUM_GRID as f64;
    let mut d = vec![setup.d0];
    let mut c = vec![setup.c0];
    let hard_cap = max_k * 50;
    let mut searched_cycle = false;
    let mut cycle_limit: Option<(f64, f64)> = None;
    let mut k = 1;
    loop {
        let (dp, cp) = (d[k - 1], c[k - 1]);
        let dk = match first_crossing(&f, dp, setup.left, &|v| v > cp, max_step) {
            Some(x) => x,
            None => dp,
        };
        let ck = match first_crossing(&fmin, cp, setup.right, &|v| v < dk, max_step) {
            Some(x) => x,
            None => cp,
        };
        d.push(dk);
        c.push(ck);
        if k >= 2 && (d[k] == d[k - 1] || c[k] == c[k - 1]) {
            let (dh, ch) = (*d.last().expect("nonempty"), *c.last().expect("nonempty"));
            return DcTrace { beta, d, c, k0: K0::Finite(k - 1), d_hat: dh, c_hat: ch, certificate: "stall".into() };
        }
        let progress = (dp - dk) + (ck - cp);
        if k >= max_k {
            if progress < 1e-9 && (f(dk) - ck).abs() <= 1e-8 && (f(ck) - dk).abs() <= 1e-8 {
                return DcTrace { beta, d, c, k0: K0::Infinite, d_hat: dk, c_hat: ck, certificate: "cycle-identity".into() };
            }
            if !searched_cycle {
                searched_cycle = true;
                cycle_limit = nearest_cycle(map, beta, setup, dk, ck);
                if let Some((p, q)) = cycle_limit {
                    return DcTrace { beta, d, c, k0: K0::Infinite, d_hat: p, c_hat: q, certificate: "two-cycle".into() };
                }
            }
        }
        if k >= hard_cap {
            let _ = cycle_limit;
            return DcTrace { beta, d, c, k0: K0::Indeterminate, d_hat: dk, c_hat: ck, certificate: "none".into() };
        }
        k += 1;
    }
}

/// The two-cycle `{p, q}` with `p` the largest cycle point in `[left, d]` whose
/// partner lies in `[c, right]`.
fn nearest_cycle(map: &MapSpec, beta: f64, setup: &DcSetup, d: f64, c: f64) -> Option<(f64, f64)> {
    let cycles = find_two_cycles(map, beta, (setup.left, setup.right));
    cycles
        .into_iter()
        .filter(|(p, q)| *p >= setup.left && *p <= d + 1e-9 && *q >= c - 1e-9 && *q <= setup.right + 1e-9)
        .max_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"))
}

/// Two-cycles `{p, q}` (`p < q`) of `G(beta, .)` with both points in `window`.
pub fn find_two_cycles(map: &MapSpec, beta: f64, window: (f64, f64)) -> Vec<(f64, f64)> {
    let (a, b) = window;
    let g = |x: f64| g_of(map, beta, x);
    let h = |x: f64| g(g(x)) - x;
    let fixed = |x: f64| g(x) - x;
    let n = EXTREMUM_GRID;
    let xs: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    let hs: Vec<f64> = xs.iter().map(|&x| h(x)).collect();
    let mut roots = Vec::new();
    for i in 0..=n {
        if !hs[i].is_finite() {
            continue;
        }
        if hs[i] == 0.0 {
            roots.push((xs[i], xs[i], xs[i]));
            continue;
        }
        if i < n && hs[i + 1].is_finite() && hs[i + 1] != 0.0 && hs[i].signum() != hs[i + 1].signum() {
            let (mut lo, mut hi) = (xs[i], xs[i + 1]);
            let s = hs[i].signum();
            for _ in 0..200 {
                if hi - lo <= 1e-13 * lo.abs().max(1.0) {
                    break;
                }
                let m = 0.5 * (lo + hi);
                let v = h(m);
                if v == 0.0 {
                    lo = m;
                    hi = m;
                    break;
                }
                if v.signum() == s {
                    lo = m;
                } else {
                    hi = m;
                }
            }
            roots.push((0.5 * (lo + hi), xs[i], xs[i + 1]));
        }
    }
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for (p, ba, bb) in roots {
        // Roots of G(G(x)) - x that are fixed points of G are not cycles.
        let (fa, fb) = (fixed(ba), fixed(bb));
        if fixed(p).abs() < 1e-8 || fa == 0.0 || fb == 0.0 || fa.signum() != fb.signum() {
            continue;
        }
        let q = g(p);
        if !q.is_finite() || q < a - 1e-9 || q > b + 1e-9 {
            continue;
        }
        if (g(q) - p).abs() > 1e-6 * p.abs().max(1.0) {
            continue;
        }
        let pair = if p < q { (p, q) } else { (q, p) };
        if !pairs.iter().any(|(u, v)| (u - pair.0).abs() < 1e-6 && (v - pair.1).abs() < 1e-6) {
            pairs.push(pair);
        }
    }
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite"));
    pairs
}

/// Limits `(d_hat, c_hat)` of a trace.
pub fn hat_limits(trace: &DcTrace) -> (f64, f64) {
    (trace.d_hat, trace.c_hat)
}

/// `g_m = max_[K0, K1-delta] g` and `g_m2 = min_[K3+delta, g_m] g`.
#[derive(Debug, Clone, Serialize)]
pub struct GmData {
    pub g_m: f64,
    pub x_m: f64,
    pub g_m2: f64,
    /// `g_m > K3 + delta` and `g_m2 < K1 - delta`.
    pub cond1: bool,
    /// Which half of the or-condition held when `cond1` failed.
    pub or_branch: Option<String>,
}

pub fn gm_data(map: &MapSpec, eq: &FourEq, delta: f64) -> GmData {
    let g = |x: f64| map.eval_or_nan(x);
    let (x_m, g_m) = interval_extremum(&g, eq.k[0], eq.k[1] - delta, ExtremumMode::MaxLargestArg, EXTREMUM_GRID);
    let top = g_m.max(eq.k[3] + delta);
    let g_m2 = min_on(&g, eq.k[3] + delta, top, EXTREMUM_GRID);
    let first = g_m > eq.k[3] + delta;
    let second = g_m2 < eq.k[1] - delta;
    let or_branch = if first && second {
        None
    } else if !first {
        Some("sup over (K0, K1 - delta) of G stays below K3 + delta".to_string())
    } else {
        Some("inf over (K3 + delta, inf) of G stays above K1 - delta".to_string())
    };
    GmData { g_m, x_m, g_m2, cond1: first && second, or_branch }
}

/// Largest argmax of `G(beta, .)` on `(lo, hi)`.
pub fn kappa_lo(map: &MapSpec, beta: f64, lo: f64, hi: f64) -> f64 {
    interval_extremum(&|x| g_of(map, beta, x), lo, hi, ExtremumMode::MaxLargestArg, EXTREMUM_GRID).0
}

/// Smallest argmin of `G(beta, .)` on `(lo, hi)`.
pub fn kappa_hi(map: &MapSpec, beta: f64, lo: f64, hi: f64) -> f64 {
    interval_extremum(&|x| g_of(map, beta, x), lo, hi, ExtremumMode::MinSmallestArg, EXTREMUM_GRID).0
}

/// The cycle-elimination predicate for one control value: the largest value of
/// `G` left of the target is below `c_hat`, or the smallest value right of it is above `d_hat`.
pub fn cycle_free(map: &MapSpec, beta: f64, setup: &DcSetup, left_top: f64, right_bottom: f64, max_k: usize) -> (bool, DcTrace) {
    let tr = dc_sequences(map, beta, setup, max_k);
    let f = |x: f64| g_of(map, beta, x);
    let up = max_on(&f, setup.left, left_top, EXTREMUM_GRID);
    let down = min_on(&f, right_bottom, setup.right, EXTREMUM_GRID);
    let ok = up < tr.c_hat || down > tr.d_hat;
    (ok, tr)
}

#[derive(Debug, Clone, Serialize)]
pub struct UnderlineAlpha {
    pub value: f64,
    pub equals_alpha0: bool,
    pub monotone: bool,
    pub cond1: bool,
}

pub const DEFAULT_MAX_K: usize = 256;

/// `underline alpha`: the smallest control above `alpha0` for which the
/// recursion cannot end on a two-cycle.
pub fn underline_alpha(map: &MapSpec, eq: &FourEq, fit: &LDeltaFit, alpha0: f64, gm: &GmData, exec: Exec) -> Result<UnderlineAlpha> {
    if !gm.cond1 {
        return Ok(UnderlineAlpha { value: alpha0, equals_alpha0: true, monotone: true, cond1: false });
    }
    let setup = DcSetup { left: eq.k[0], d0: eq.k[1] - fit.delta, c0: eq.k[3] + fit.delta, right: gm.g_m };
    let pred = |b: f64| cycle_free(map, b, &setup, eq.k[1], eq.k[3], DEFAULT_MAX_K).0;
    let hi = 1.0 - 1e-3;
    if !pred(hi) {
        return Err(Error::Analysis(format!("cycle-elimination predicate fails at control {hi}")));
    }
    let s = infimum_search(&pred, alpha0, hi, 400, 1e-5, exec);
    let v = s.value.expect("true at the upper end");
    Ok(UnderlineAlpha { value: v, equals_alpha0: s.at_open_end || v - alpha0 < 1e-4, monotone: s.monotone, cond1: true })
}

/// `max{alpha0, (L1 L3 - 1) / ((L1 + 1)(L3 + 1))}`.
pub fn alpha1_estimate(alpha0: f64, l1: f64, l3: f64) -> f64 {
    alpha0.max((l1 * l3 - 1.0) / ((l1 + 1.0) * (l3 + 1.0)))
}

#[derive(Debug, Clone, Serialize)]
pub struct Alpha1 {
    pub value: f64,
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L3")]
    pub l3: f64,
    pub d1_0: f64,
    pub c1_0: f64,
}

/// Derivative bounds `L1` on `[x_m, d_1(0)]` and `L3` on `[c_1(0), g_m]`, then [`alpha1_estimate`].
pub fn alpha1_from_map(map: &MapSpec, eq: &FourEq, fit: &LDeltaFit, alpha0: f64, gm: &GmData) -> Alpha1 {
    let setup = DcSetup { left: eq.k[0], d0: eq.k[1] - fit.delta, c0: eq.k[3] + fit.delta, right: gm.g_m };
    let tr = dc_sequences(map, 0.0, &setup, 2);
    let (d1, c1) = (tr.d[1], tr.c[1]);
    let slope_bound = |a: f64, b: f64| -> f64 {
        if !(b > a) {
            return 0.0;
        }
        let n = 4000;
        let h = 1e-7 * (b - a).max(1e-3);
        (0..=n)
            .map(|i| {
                let x = (a + (b - a) * i as f64 / n as f64).clamp(a + h, b - h);
                -(map.eval_or_nan(x + h) - map.eval_or_nan(x - h)) / (2.0 * h)
            })
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max)
    };
    let l1 = slope_bound(gm.x_m, d1);
    let l3 = slope_bound(c1, gm.g_m);
    Alpha1 { value: alpha1_estimate(alpha0, l1, l3), l1, l3, d1_0: d1, c1_0: c1 }
}

/// Everything computed for a four-equilibrium map.
#[derive(Debug, Clone, Serialize)]
pub struct ThresholdReport {
    pub map_name: String,
    pub equilibria: FourEq,
    pub fit: LDeltaFit,
    pub alpha0: f64,
    pub alpha0_monotone: bool,
    pub g_m: f64,
    pub g_m2: f64,
    pub cond1: bool,
    pub cond1_branch: Option<String>,
    pub underline_alpha: f64,
    pub underline_alpha_equals_alpha0: bool,
    pub underline_alpha_monotone: bool,
    pub alpha1: Alpha1,
    /// Control at which the trace, kappas and two-cycles below are evaluated.
    pub trace_beta: f64,
    pub kappa_lo: f64,
    pub kappa_hi: f64,
    pub d_seq: Vec<f64>,
    pub c_seq: Vec<f64>,
    pub k0: K0,
    pub d_hat: f64,
    pub c_hat: f64,
    pub two_cycles: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy)]
pub struct ThresholdOptions {
    pub policy: DeltaPolicy,
    pub trace_beta: Option<f64>,
    pub exec: Exec,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        ThresholdOptions { policy: DeltaPolicy::Auto, trace_beta: None, exec: Exec::Parallel }
    }
}

pub fn analyze_thresholds(map: &MapSpec, analysis: &EquilibriumAnalysis, opts: ThresholdOptions) -> Result<ThresholdReport> {
    let eq = FourEq::from_analysis(analysis)?;
    let fit = fit_l_delta(map, &eq, opts.policy)?;
    let a0 = alpha0_lower(map, &eq, &fit)?;
    let gm = gm_data(map, &eq, fit.delta);
    let ua = underline_alpha(map, &eq, &fit, a0.value, &gm, opts.exec)?;
    let a1 = alpha1_from_map(map, &eq, &fit, a0.value, &gm);
    let trace_beta = opts.trace_beta.unwrap_or(if ua.value - a0.value > 1e-4 {
        0.5 * (a0.value + ua.value)
    } else {
        (a0.value + 1e-3).min(0.999)
    });
    let setup = DcSetup { left: eq.k[0], d0: eq.k[1] - fit.delta, c0: eq.k[3] + fit.delta, right: gm.g_m.max(eq.k[3] + fit.delta) };
    let tr = dc_sequences(map, trace_beta, &setup, DEFAULT_MAX_K);
    let kl = kappa_lo(map, trace_beta, eq.k[0], eq.k[1] - fit.delta);
    let kh = kappa_hi(map, trace_beta, eq.k[3] + fit.delta, setup.right);
    let top = if eq.k4.is_finite() { eq.k4 } else { gm.g_m.max(eq.truncation) };
    let cycles = find_two_cycles(map, trace_beta, (eq.k[0], top));
    Ok(ThresholdReport {
        map_name: map.name.clone(),
        equilibria: eq,
        fit,
        alpha0: a0.value,
        alpha0_monotone: a0.monotone,
        g_m: gm.g_m,
        g_m2: gm.g_m2,
        cond1: gm.cond1,
        cond1_branch: gm.or_branch,
        underline_alpha: ua.value,
        underline_alpha_equals_alpha0: ua.equals_alpha0,
        underline_alpha_monotone: ua.monotone,
        alpha1: a1,
        trace_beta,
        kappa_lo: kl,
        kappa_hi: kh,
        d_seq: tr.d,
        c_seq: tr.c,
        k0: tr.k0,
        d_hat: tr.d_hat,
        c_hat: tr.c_hat,
        two_cycles: cycles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha1_arithmetic() {
        assert_eq!(alpha1_estimate(0.3, 1.0, 1.0), 0.3);
        let v = alpha1_estimate(0.249, 9.8, 1.65);
        assert!((v - (9.8 * 1.65 - 1.0) / (10.8 * 2.65)).abs() < 1e-15);
        assert!((v - 0.530).abs() < 1e-3);
        for (l1, l3) in [(2.0, 1.5), (9.8, 1.65), (40.0, 3.0)] {
            let t = (l1 * l3 - 1.0) / ((l1 + 1.0) * (l3 + 1.0));
            assert!(t < l3 / (l3 + 1.0));
        }
    }

    #[test]
    fn searches_find_step_edges() {
        let s = infimum_search(&|b| b > 0.3721, 0.0, 1.0, 100, 1e-9, Exec::Sequential);
        assert!((s.value.unwrap() - 0.3721).abs() < 1e-8 && s.monotone);
        let s = supremum_search(&|b| b < 0.61, 0.0, 1.0, 100, 1e-9, Exec::Sequential);
        assert!((s.value.unwrap() - 0.61).abs() < 1e-8);
        let s = infimum_search(&|_| false, 0.0, 1.0, 10, 1e-9, Exec::Sequential);
        assert!(s.value.is_none());
        let s = infimum_search(&|b| (0.2..0.3).contains(&b) || b > 0.5, 0.0, 1.0, 100, 1e-9, Exec::Sequential);
        assert!(!s.monotone);
    }

    #[test]
    fn crossing_scan_locates_level() {
        let x = first_crossing(&|x| x * x, 1.0, 0.0, &|v| v < 0.25, 1e-3).unwrap();
        assert!((x - 0.5).abs() < 1e-12);
        assert!(first_crossing(&|x| x, 0.5, 1.0, &|v| v > 2.0, 1e-3).is_none());
    }
}
