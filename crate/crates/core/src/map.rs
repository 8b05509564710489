//! Scalar maps `g`, their equilibria, sign structure and one-sided constants.

use crate::error::{Error, Result};
use crate::expr::{parse_constant, Expr};
use crate::extremum::golden_max;
use crate::serde_inf;
use serde::{Deserialize, Serialize};

/// Closed domain `[lo, hi]`; `hi = None` means unbounded above.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub lo: f64,
    pub hi: Option<f64>,
}

impl Domain {
    pub fn contains(&self, x: f64) -> bool {
        let slack = 1e-12 * self.lo.abs().max(1.0);
        if !(x >= self.lo - slack) {
            return false;
        }
        match self.hi {
            Some(h) => x <= h + 1e-12 * h.abs().max(1.0),
            None => x.is_finite(),
        }
    }

    pub fn hi_or(&self, fallback: f64) -> f64 {
        self.hi.unwrap_or(fallback)
    }
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub lo: f64,
    pub hi: f64,
    pub expr: Expr,
}

#[derive(Debug, Clone)]
pub enum MapKind {
    Ricker { r: f64 },
    Logistic { r: f64 },
    Piecewise(Vec<Branch>),
    Iterate { base: Box<MapSpec>, k: u32 },
}

#[derive(Debug, Clone)]
pub struct MapSpec {
    pub kind: MapKind,
    pub domain: Domain,
    pub name: String,
    /// Upper end of the equilibrium scan when the domain is unbounded.
    pub scan_hi: Option<f64>,
}

const DEFAULT_SCAN_HI: f64 = 10.0;

impl MapSpec {
    pub fn ricker(r: f64) -> MapSpec {
        MapSpec {
            kind: MapKind::Ricker { r },
            domain: Domain { lo: 0.0, hi: None },
            name: format!("ricker(r={r})"),
            scan_hi: None,
        }
    }

    pub fn logistic(r: f64) -> MapSpec {
        MapSpec {
            kind: MapKind::Logistic { r },
            domain: Domain { lo: 0.0, hi: Some(1.0) },
            name: format!("logistic(r={r})"),
            scan_hi: None,
        }
    }

    pub fn piecewise(branches: Vec<Branch>, domain: Domain, name: &str) -> Result<MapSpec> {
        if branches.is_empty() {
            return Err(Error::Spec("piecewise map needs at least one branch".into()));
        }
        for w in branches.windows(2) {
            if w[0].hi != w[1].lo {
                return Err(Error::Spec(format!(
                    "branches leave a gap or overlap between {} and {}",
                    w[0].hi, w[1].lo
                )));
            }
        }
        for b in &branches {
            if !(b.lo < b.hi) {
                return Err(Error::Spec(format!("empty branch [{}, {}]", b.lo, b.hi)));
            }
        }
        let first = branches[0].lo;
        let last = branches[branches.len() - 1].hi;
        if domain.lo < first || domain.hi.unwrap_or(f64::INFINITY) > last {
            return Err(Error::Spec(format!(
                "domain [{}, {}] is not covered by branches [{first}, {last}]",
                domain.lo,
                domain.hi.unwrap_or(f64::INFINITY)
            )));
        }
        Ok(MapSpec {
            kind: MapKind::Piecewise(branches),
            domain,
            name: name.to_string(),
            scan_hi: None,
        })
    }

    pub fn iterate(&self, k: u32) -> Result<MapSpec> {
        if k == 0 {
            return Err(Error::Parameter("iterate needs k >= 1".into()));
        }
        if k == 1 {
            return Ok(self.clone());
        }
        Ok(MapSpec {
            kind: MapKind::Iterate { base: Box::new(self.clone()), k },
            domain: self.domain,
            name: format!("{}^{k}", self.name),
            scan_hi: self.scan_hi,
        })
    }

    pub fn with_name(mut self, name: &str) -> MapSpec {
        self.name = name.to_string();
        self
    }

    /// Evaluate `g(x)`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !self.domain.contains(x) {
            return Err(Error::OutOfDomain {
                x,
                lo: self.domain.lo,
                hi: self.domain.hi.unwrap_or(f64::INFINITY),
            });
        }
        let y = self.eval_unchecked(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::OutOfDomain {
                x,
                lo: self.domain.lo,
                hi: self.domain.hi.unwrap_or(f64::INFINITY),
            })
        }
    }

    /// `g(x)`, or NaN outside the domain.
    #[inline]
    pub fn eval_or_nan(&self, x: f64) -> f64 {
        if !self.domain.contains(x) {
            return f64::NAN;
        }
        self.eval_unchecked(x)
    }

    fn eval_unchecked(&self, x: f64) -> f64 {
        match &self.kind {
            MapKind::Ricker { r } => x * (r * (1.0 - x)).exp(),
            MapKind::Logistic { r } => r * x * (1.0 - x),
            MapKind::Piecewise(branches) => eval_piecewise(branches, x),
            MapKind::Iterate { base, k } => {
                let mut y = x;
                for _ in 0..*k {
                    y = base.eval_or_nan(y);
                    if y.is_nan() {
                        break;
                    }
                }
                y
            }
        }
    }

    /// Upper end used for scanning: the domain end, or `scan_hi` when unbounded.
    pub fn scan_upper(&self) -> f64 {
        match self.domain.hi {
            Some(h) => h,
            None => self.scan_hi.unwrap_or(DEFAULT_SCAN_HI),
        }
    }

    pub fn from_json_str(text: &str) -> Result<MapSpec> {
        let raw: RawSpec = serde_json::from_str(text)?;
        raw.build()
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<MapSpec> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// The JSON form accepted by [`MapSpec::from_json_str`].
    pub fn to_json_value(&self) -> serde_json::Value {
        use serde_json::json;
        let hi = match self.domain.hi {
            Some(h) => json!(h),
            None => json!("inf"),
        };
        let mut v = match &self.kind {
            MapKind::Ricker { r } => json!({"kind": "ricker", "r": r}),
            MapKind::Logistic { r } => json!({"kind": "logistic", "r": r}),
            MapKind::Piecewise(bs) => {
                let branches: Vec<_> = bs
                    .iter()
                    .map(|b| json!({"lo": num_or_inf(b.lo), "hi": num_or_inf(b.hi), "expr": b.expr.source()}))
                    .collect();
                json!({"kind": "piecewise", "branches": branches})
            }
            MapKind::Iterate { base, k } => json!({"kind": "iterate", "k": k, "base": base.to_json_value()}),
        };
        let obj = v.as_object_mut().expect("object");
        obj.insert("domain".into(), json!([self.domain.lo, hi]));
        obj.insert("name".into(), json!(self.name));
        if let Some(s) = self.scan_hi {
            obj.insert("scan_hi".into(), json!(s));
        }
        v
    }
}

fn num_or_inf(x: f64) -> serde_json::Value {
    if x.is_infinite() {
        serde_json::json!(if x > 0.0 { "inf" } else { "-inf" })
    } else {
        serde_json::json!(x)
    }
}

#[inline]
fn eval_piecewise(branches: &[Branch], x: f64) -> f64 {
    // Branches are closed on the right; the first one also holds its left end.
    let idx = branches.partition_point(|b| b.hi < x);
    if idx >= branches.len() {
        let last = &branches[branches.len() - 1];
        if x - last.hi <= 1e-12 * last.hi.abs().max(1.0) {
            return last.expr.eval(x);
        }
        return f64::NAN;
    }
    let b = &branches[idx];
    if idx == 0 && x < b.lo {
        if b.lo - x <= 1e-12 * b.lo.abs().max(1.0) {
            return b.expr.eval(x);
        }
        return f64::NAN;
    }
    b.expr.eval(x)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumOrStr {
    Num(f64),
    Str(String),
}

impl NumOrStr {
    fn value(&self) -> Result<f64> {
        match self {
            NumOrStr::Num(v) => Ok(*v),
            NumOrStr::Str(s) => parse_constant(s),
        }
    }
}

#[derive(Deserialize)]
struct RawBranch {
    lo: NumOrStr,
    hi: NumOrStr,
    expr: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    kind: String,
    #[serde(default)]
    r: Option<f64>,
    #[serde(default)]
    k: Option<u32>,
    #[serde(default)]
    branches: Option<Vec<RawBranch>>,
    #[serde(default)]
    domain: Option<(NumOrStr, NumOrStr)>,
    #[serde(default)]
    base: Option<Box<RawSpec>>,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    scan_hi: Option<f64>,
}

impl RawSpec {
    fn domain(&self) -> Result<Option<Domain>> {
        match &self.domain {
            None => Ok(None),
            Some((a, b)) => {
                let lo = a.value()?;
                let hi = b.value()?;
                if !lo.is_finite() {
                    return Err(Error::Spec("domain lower end must be finite".into()));
                }
                if !(hi > lo) {
                    return Err(Error::Spec(format!("empty domain [{lo}, {hi}]")));
                }
                Ok(Some(Domain {
                    lo,
                    hi: if hi.is_infinite() { None } else { Some(hi) },
                }))
            }
        }
    }

    fn build(&self) -> Result<MapSpec> {
        let need_r = || {
            self.r
                .filter(|r| *r > 0.0 && r.is_finite())
                .ok_or_else(|| Error::Spec(format!("kind {:?} needs a positive \"r\"", self.kind)))
        };
        let mut spec = match self.kind.as_str() {
            "ricker" => MapSpec::ricker(need_r()?),
            "logistic" => MapSpec::logistic(need_r()?),
            "piecewise" => {
                let raw = self
                    .branches
                    .as_ref()
                    .ok_or_else(|| Error::Spec("piecewise map needs \"branches\"".into()))?;
                let mut branches = Vec::with_capacity(raw.len());
                for b in raw {
                    branches.push(Branch {
                        lo: b.lo.value()?,
                        hi: b.hi.value()?,
                        expr: Expr::parse(&b.expr)?,
                    });
                }
                let domain = match self.domain()? {
                    Some(d) => d,
                    None => {
                        let lo = branches.first().map(|b| b.lo).unwrap_or(0.0);
                        let hi = branches.last().map(|b| b.hi).unwrap_or(1.0);
                        if !lo.is_finite() {
                            return Err(Error::Spec("piecewise map without finite domain".into()));
                        }
                        Domain { lo, hi: if hi.is_infinite() { None } else { Some(hi) } }
                    }
                };
                MapSpec::piecewise(branches, domain, "piecewise")?
            }
            "iterate" => {
                let base = self
                    .base
                    .as_ref()
                    .ok_or_else(|| Error::Spec("iterate needs \"base\"".into()))?
                    .build()?;
                let k = self.k.ok_or_else(|| Error::Spec("iterate needs \"k\"".into()))?;
                return self.finish(base.iterate(k)?, true);
            }
            other => return Err(Error::Spec(format!("unknown map kind {other:?}"))),
        };
        if let Some(k) = self.k {
            spec = spec.iterate(k)?;
        }
        self.finish(spec, self.kind != "piecewise")
    }

    fn finish(&self, mut spec: MapSpec, apply_domain: bool) -> Result<MapSpec> {
        if apply_domain {
            if let Some(d) = self.domain()? {
                spec.domain = d;
            }
        }
        if let Some(n) = &self.name {
            spec.name = n.clone();
        }
        if self.scan_hi.is_some() {
            spec.scan_hi = self.scan_hi;
        }
        Ok(spec)
    }
}

/// Sign of `g(x) - x` on an open interval between consecutive equilibria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
    /// Identically zero, or both signs present.
    #[serde(rename = "0")]
    Zero,
}

impl Sign {
    pub fn symbol(&self) -> &'static str {
        match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
            Sign::Zero => "0",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

/// One-sided constants at an odd-indexed equilibrium `K_{2i+1}`.
#[derive(Debug, Clone, Serialize)]
pub struct OneSided {
    pub index: usize,
    pub k: f64,
    #[serde(serialize_with = "serde_inf::f64_inf")]
    pub minus: f64,
    #[serde(serialize_with = "serde_inf::f64_inf")]
    pub plus: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumAnalysis {
    pub map_name: String,
    /// Finite equilibria `K_0 < K_1 < ...`.
    pub equilibria: Vec<f64>,
    /// True when `K_{j0} = +inf` closes the list.
    pub upper_infinite: bool,
    /// Zeros of `g(x) - x` without a sign change.
    pub tangential: Vec<f64>,
    pub signs: Vec<Sign>,
    /// Upper bound standing in for `+inf`.
    pub truncation: f64,
    /// Largest value of `g` on `[K_0, K_last]`.
    pub g_max: f64,
    pub lipschitz: Vec<OneSided>,
    #[serde(serialize_with = "serde_inf::f64_inf")]
    pub l0_plus: f64,
    #[serde(serialize_with = "serde_inf::opt_f64_inf")]
    pub lj0_minus: Option<f64>,
}

impl EquilibriumAnalysis {
    /// `j0`: index of the last equilibrium, counting `+inf` when present.
    pub fn j0(&self) -> usize {
        self.equilibria.len() - 1 + usize::from(self.upper_infinite)
    }

    /// `K_j`, with `K_{j0} = +inf` when the list is open above.
    pub fn k(&self, j: usize) -> f64 {
        if j < self.equilibria.len() {
            self.equilibria[j]
        } else {
            f64::INFINITY
        }
    }

    /// `K_j`, with `+inf` replaced by the truncation bound.
    pub fn k_trunc(&self, j: usize) -> f64 {
        let v = self.k(j);
        if v.is_infinite() {
            self.truncation
        } else {
            v
        }
    }

    /// Odd-indexed equilibria `K_{2i+1}` (finite ones).
    pub fn targets(&self) -> Vec<f64> {
        self.equilibria.iter().skip(1).step_by(2).copied().collect()
    }

    pub fn interval_of(&self, x: f64) -> usize {
        self.equilibria.partition_point(|k| *k < x).saturating_sub(1)
    }

    pub fn lipschitz_at(&self, index: usize) -> Option<&OneSided> {
        self.lipschitz.iter().find(|l| l.index == index)
    }
}

/// Options for [`find_equilibria`].
#[derive(Debug, Clone, Copy)]
pub struct EquilibriumOptions {
    pub grid_n: usize,
    pub tol: f64,
    pub truncation: Option<f64>,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        EquilibriumOptions { grid_n: 10_000, tol: 1e-13, truncation: None }
    }
}

/// Locate the equilibria of `g` and analyze their structure.
pub fn find_equilibria(map: &MapSpec, opts: EquilibriumOptions) -> Result<EquilibriumAnalysis> {
    if opts.grid_n < 1000 {
        return Err(Error::Parameter("grid_n must be at least 1000".into()));
    }
    let lo = map.domain.lo;
    let hi = map.scan_upper();
    let (roots, tangential) = scan_roots(map, lo, hi, opts.grid_n, opts.tol);
    if roots.is_empty() {
        return Err(Error::NothingToStabilize { found: 0 });
    }
    let upper_infinite = map.domain.hi.is_none();
    let last = *roots.last().expect("nonempty");
    let g_max = {
        let n = 20_000;
        let top = if upper_infinite { hi } else { last.max(hi) };
        (0..=n)
            .map(|i| map.eval_or_nan(lo + (top - lo) * i as f64 / n as f64))
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let truncation = match (map.domain.hi, opts.truncation) {
        (Some(h), _) => h,
        (None, Some(t)) => t,
        (None, None) => g_max.max(2.0 * last).max(last + 1.0),
    };
    let mut analysis = EquilibriumAnalysis {
        map_name: map.name.clone(),
        equilibria: roots,
        upper_infinite,
        tangential,
        signs: Vec::new(),
        truncation,
        g_max,
        lipschitz: Vec::new(),
        l0_plus: 0.0,
        lj0_minus: None,
    };
    analysis.signs = interval_signs(map, &analysis);
    fill_lipschitz(map, &mut analysis)?;
    Ok(analysis)
}

fn scan_roots(map: &MapSpec, lo: f64, hi: f64, grid_n: usize, tol: f64) -> (Vec<f64>, Vec<f64>) {
    let n = grid_n.max(((hi - lo) * 1e4).ceil() as usize);
    let h = |x: f64| map.eval_or_nan(x) - x;
    let xs: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
    let hs: Vec<f64> = xs.iter().map(|&x| h(x)).collect();
    let zero = |i: usize| hs[i] == 0.0;
    let mut roots = Vec::new();
    let mut tangential = Vec::new();
    let mut i = 0;
    while i <= n {
        if zero(i) {
            // A run of exact zeros contributes its two ends.
            let start = i;
            while i < n && zero(i + 1) {
                i += 1;
            }
            roots.push(xs[start]);
            if i > start {
                roots.push(xs[i]);
            }
            i += 1;
            continue;
        }
        if i < n && !zero(i + 1) && hs[i].is_finite() && hs[i + 1].is_finite() && hs[i].signum() != hs[i + 1].signum() {
            roots.push(bisect(&h, xs[i], xs[i + 1], hs[i], tol));
        }
        i += 1;
    }
    for i in 1..n {
        let (a, b, c) = (hs[i - 1].abs(), hs[i].abs(), hs[i + 1].abs());
        if b < a && b <= c && b < 1e-6 && hs[i - 1].signum() == hs[i].signum() && hs[i].signum() == hs[i + 1].signum() && hs[i] != 0.0 {
            let s = hs[i].signum();
            let (x, v) = golden_max(&|x| -s * h(x), xs[i - 1], xs[i + 1], 1e-14);
            if (-v).abs() <= 1e-9 * x.abs().max(1.0) {
                tangential.push(x);
            }
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    roots.dedup_by(|a, b| (*a - *b).abs() <= 10.0 * tol.max(1e-15));
    (roots, tangential)
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, fa: f64, _tol: f64) -> f64 {
    // Bisect to adjacent floats, then keep the end with the smaller residual.
    let sa = fa.signum();
    let mut fb = f(b);
    let mut fa = fa;
    for _ in 0..2000 {
        let m = 0.5 * (a + b);
        if m <= a.min(b) || m >= a.max(b) {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == sa {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
    }
    if fb.abs() < fa.abs() {
        b
    } else {
        a
    }
}

fn interval_signs(map: &MapSpec, a: &EquilibriumAnalysis) -> Vec<Sign> {
    let j0 = a.j0();
    (0..j0)
        .map(|p| {
            let l = a.k(p);
            let r = a.k_trunc(p + 1);
            let n = 256;
            let (mut pos, mut neg) = (0, 0);
            for i in 1..n {
                let x = l + (r - l) * i as f64 / n as f64;
                let v = map.eval_or_nan(x) - x;
                if v > 0.0 {
                    pos += 1;
                } else if v < 0.0 {
                    neg += 1;
                }
            }
            match (pos > 0, neg > 0) {
                (true, false) => Sign::Plus,
                (false, true) => Sign::Minus,
                _ => Sign::Zero,
            }
        })
        .collect()
}

/// Violation found by [`sign_pattern_check`].
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SignViolation {
    pub interval: usize,
    pub expected: Sign,
    pub found: Sign,
}

/// Check that `g(x) - x` alternates `+, -, +, ...` starting on `(K_0, K_1)`.
pub fn sign_pattern_check(a: &EquilibriumAnalysis) -> std::result::Result<Vec<Sign>, SignViolation> {
    for (p, s) in a.signs.iter().enumerate() {
        let expected = if p % 2 == 0 { Sign::Plus } else { Sign::Minus };
        if *s != expected {
            return Err(SignViolation { interval: p, expected, found: *s });
        }
    }
    Ok(a.signs.clone())
}

/// Supremum of the one-sided ratio at equilibrium `k` over `window`.
///
/// Left side: `(g(x) - k) / (k - x)` for `x < k`. Right side:
/// `(k - g(x)) / (x - k)` for `x > k`. Returns `+inf` when the ratio grows
/// like `h^-p` as `h -> 0` (log-log slope above 0.2 over the finest decades).
pub fn one_sided_lipschitz(map: &MapSpec, k: f64, side: Side, window: (f64, f64)) -> Result<f64> {
    let (a, b) = window;
    let far = match side {
        Side::Left => k - a,
        Side::Right => b - k,
    };
    if !(b > a) || !(far > 0.0) {
        return Err(Error::Parameter(format!("empty window ({a}, {b}) on the {side:?} of {k}")));
    }
    let ratio = |h: f64| -> f64 {
        match side {
            Side::Left => (map.eval_or_nan(k - h) - k) / h,
            Side::Right => (k - map.eval_or_nan(k + h)) / h,
        }
    };
    let mut sup = f64::NEG_INFINITY;
    let n = 4000;
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 1..n {
        let h = far * i as f64 / n as f64;
        let r = ratio(h);
        if r.is_finite() && r > best.1 {
            best = (h, r);
        }
    }
    if best.1.is_finite() {
        let step = far / n as f64;
        let lo = (best.0 - step).max(far * 1e-12);
        let hi = (best.0 + step).min(far * (1.0 - 1e-12));
        let (_, v) = golden_max(&|h| nan_low(ratio(h)), lo, hi, 1e-13);
        sup = sup.max(best.1).max(v);
    }
    let mut fine: Vec<(f64, f64)> = Vec::new();
    let mut h = far;
    while h >= 1e-10 {
        let r = ratio(h);
        if r.is_finite() {
            sup = sup.max(r);
            if h <= 1e-7 * 1.0000001 {
                fine.push((h, r));
            }
        }
        h *= 0.8;
    }
    let pts: Vec<(f64, f64)> = fine
        .iter()
        .filter(|(_, r)| *r > 0.0)
        .map(|(h, r)| ((1.0 / h).ln(), r.ln()))
        .collect();
    if pts.len() >= 5 && pts.len() * 2 >= fine.len() {
        let slope = ls_slope(&pts);
        if slope > 0.2 {
            return Ok(f64::INFINITY);
        }
    }
    Ok(sup.max(0.0))
}

fn nan_low(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

fn fill_lipschitz(map: &MapSpec, a: &mut EquilibriumAnalysis) -> Result<()> {
    let j0 = a.j0();
    let mut out = Vec::new();
    let mut idx = 1;
    while idx < a.equilibria.len() && idx < j0 {
        let k = a.k(idx);
        let minus = one_sided_lipschitz(map, k, Side::Left, (a.k(idx - 1), k))?;
        let plus = one_sided_lipschitz(map, k, Side::Right, (k, a.k_trunc(idx + 1)))?;
        out.push(OneSided { index: idx, k, minus, plus });
        idx += 2;
    }
    a.lipschitz = out;
    if a.equilibria.len() >= 2 {
        let k0 = a.k(0);
        a.l0_plus = one_sided_lipschitz(map, k0, Side::Right, (k0, a.k_trunc(j0)))?;
    }
    if !a.upper_infinite && j0 >= 1 {
        let kj = a.k(j0);
        a.lj0_minus = Some(one_sided_lipschitz(map, kj, Side::Left, (a.k(0), kj))?);
    }
    Ok(())
}

/// Mismatch between adjacent piecewise branches at a shared knot.
#[derive(Debug, Clone, Serialize)]
pub struct KnotMismatch {
    pub knot: f64,
    pub left_value: f64,
    pub right_value: f64,
}

/// Compare adjacent branches at every knot; returns knots whose mismatch exceeds `tol`.
pub fn continuity_audit(map: &MapSpec, tol: f64) -> Vec<KnotMismatch> {
    let mut bad = Vec::new();
    match &map.kind {
        MapKind::Piecewise(bs) => {
            for w in bs.windows(2) {
                let knot = w[0].hi;
                if !knot.is_finite() {
                    continue;
                }
                let l = w[0].expr.eval(knot);
                let r = w[1].expr.eval(knot);
                if !((l - r).abs() <= tol) {
                    bad.push(KnotMismatch { knot, left_value: l, right_value: r });
                }
            }
        }
        MapKind::Iterate { base, .. } => bad.extend(continuity_audit(base, tol)),
        _ => {}
    }
    bad
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ricker2() -> MapSpec {
        MapSpec::ricker(2.7).iterate(2).unwrap()
    }

    #[test]
    fn ricker_fixed_point() {
        assert_eq!(MapSpec::ricker(2.7).eval(1.0).unwrap(), 1.0);
    }

    #[test]
    fn iterate_one_is_identity_of_composition() {
        let f = MapSpec::ricker(2.7);
        let f1 = f.iterate(1).unwrap();
        for i in 0..50 {
            let x = 0.05 * i as f64;
            assert_eq!(f.eval(x).unwrap(), f1.eval(x).unwrap());
        }
    }

    #[test]
    fn ricker_equilibria() {
        let a = find_equilibria(&MapSpec::ricker(2.7), EquilibriumOptions::default()).unwrap();
        assert_eq!(a.equilibria.len(), 2);
        assert!(a.equilibria[0].abs() < 1e-12 && (a.equilibria[1] - 1.0).abs() < 1e-12);
        assert_eq!(sign_pattern_check(&a).unwrap(), vec![Sign::Plus, Sign::Minus]);
    }

    #[test]
    fn ricker2_equilibria_and_pattern() {
        let a = find_equilibria(&ricker2(), EquilibriumOptions::default()).unwrap();
        assert_eq!(a.equilibria.len(), 4);
        assert!(a.upper_infinite);
        assert_eq!(a.j0(), 4);
        for k in &a.equilibria {
            assert!((ricker2().eval(*k).unwrap() - k).abs() < 1e-9);
        }
        assert_eq!(
            sign_pattern_check(&a).unwrap(),
            vec![Sign::Plus, Sign::Minus, Sign::Plus, Sign::Minus]
        );
    }

    #[test]
    fn ricker2_left_constant_exceeds_bound() {
        let m = ricker2();
        let a = find_equilibria(&m, EquilibriumOptions::default()).unwrap();
        let k1 = a.equilibria[1];
        let l = one_sided_lipschitz(&m, k1, Side::Left, (0.0, k1)).unwrap();
        assert!(l > 9.8, "{l}");
    }

    #[test]
    fn identity_map_violates_pattern() {
        let b = Branch { lo: 0.0, hi: 1.0, expr: Expr::parse("x").unwrap() };
        let m = MapSpec::piecewise(vec![b], Domain { lo: 0.0, hi: Some(1.0) }, "id").unwrap();
        let a = find_equilibria(&m, EquilibriumOptions::default()).unwrap();
        assert!(sign_pattern_check(&a).is_err());
    }

    #[test]
    fn out_of_domain_is_an_error() {
        let m = MapSpec::logistic(3.9);
        assert!(matches!(m.eval(1.5), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"kind":"iterate","k":2,"base":{"kind":"ricker","r":2.7}}"#;
        let m = MapSpec::from_json_str(text).unwrap();
        let back = MapSpec::from_json_str(&m.to_json_value().to_string()).unwrap();
        for i in 0..20 {
            let x = 0.1 * i as f64;
            assert_eq!(m.eval(x).unwrap(), back.eval(x).unwrap());
        }
        let short = MapSpec::from_json_str(r#"{"kind":"ricker","r":2.7,"k":2}"#).unwrap();
        assert_eq!(short.eval(0.3).unwrap(), m.eval(0.3).unwrap());
    }

    #[test]
    fn json_rejects_bad_specs() {
        assert!(MapSpec::from_json_str(r#"{"kind":"ricker"}"#).is_err());
        assert!(MapSpec::from_json_str(r#"{"kind":"tent","r":1}"#).is_err());
        let gap = r#"{"kind":"piecewise","branches":[{"lo":0,"hi":1,"expr":"x"},{"lo":1.5,"hi":2,"expr":"x"}]}"#;
        assert!(MapSpec::from_json_str(gap).is_err());
    }
}
