//! Maps with many equilibria: side classification of the targets, the block
//! decomposition of `(K_0, K_{j0})`, and per-block deterministic and noisy thresholds.

use crate::control::g_of;
use crate::error::{Error, Result};
use crate::extremum::{max_on, min_on};
use crate::map::{EquilibriumAnalysis, MapSpec};
use crate::par::{map_slice, Exec};
use crate::serde_inf;
use crate::stochastic::AdmissibleRegion;
use crate::thresholds::{
    cycle_free, infimum_search, kappa_hi, kappa_lo, supremum_search, DcSetup, DEFAULT_MAX_K, EXTREMUM_GRID,
};
use serde::Serialize;
use std::fmt::Write as _;

#[derive(Debug, Clone, Serialize)]
pub struct SideClass {
    pub i: usize,
    pub k: f64,
    #[serde(serialize_with = "serde_inf::f64_inf")]
    pub minus: f64,
    #[serde(serialize_with = "serde_inf::f64_inf")]
    pub plus: f64,
    /// `min(L^-, L^+)`.
    #[serde(rename = "L")]
    pub l: f64,
    /// `L^+ <= L^-` (ties go here).
    pub plus_side: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Sides {
    pub i0: usize,
    pub classes: Vec<SideClass>,
    pub i_plus: Vec<usize>,
    pub i_minus: Vec<usize>,
    pub bar_l: f64,
    pub first_stage_bound: f64,
    #[serde(serialize_with = "serde_inf::f64_inf")]
    pub l0_plus: f64,
    #[serde(serialize_with = "serde_inf::opt_f64_inf")]
    pub lj0_minus: Option<f64>,
}

/// Split the targets `K_{2i+1}`, `i = 0..=i0`, into `I+` and `I-`.
pub fn classify_sides(a: &EquilibriumAnalysis) -> Result<Sides> {
    let j0 = a.j0();
    if j0 < 2 {
        return Err(Error::NothingToStabilize { found: a.equilibria.len() });
    }
    let i0 = j0 / 2 - 1;
    let mut classes = Vec::new();
    for i in 0..=i0 {
        let idx = 2 * i + 1;
        let os = a
            .lipschitz_at(idx)
            .ok_or_else(|| Error::Analysis(format!("no one-sided constants at K_{idx}")))?;
        if os.minus.is_infinite() && os.plus.is_infinite() {
            return Err(Error::Uncontrollable { index: idx, value: os.k });
        }
        classes.push(SideClass {
            i,
            k: os.k,
            minus: os.minus,
            plus: os.plus,
            l: os.minus.min(os.plus),
            plus_side: os.plus <= os.minus,
        });
    }
    let i_plus: Vec<usize> = classes.iter().filter(|c| c.plus_side).map(|c| c.i).collect();
    let i_minus: Vec<usize> = classes.iter().filter(|c| !c.plus_side).map(|c| c.i).collect();
    let mut bar_l = a.l0_plus;
    if let Some(v) = a.lj0_minus {
        bar_l = bar_l.max(v);
    }
    for c in &classes {
        bar_l = bar_l.max(c.l);
    }
    Ok(Sides {
        i0,
        classes,
        i_plus,
        i_minus,
        bar_l,
        first_stage_bound: bar_l / (bar_l + 1.0),
        l0_plus: a.l0_plus,
        lj0_minus: a.lj0_minus,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BlockKind {
    V0,
    VOdd(usize),
    VTilde,
}

impl BlockKind {
    pub fn label(&self) -> String {
        match self {
            BlockKind::V0 => "V0".into(),
            BlockKind::VOdd(s) => format!("V{}", 2 * s + 1),
            BlockKind::VTilde => "V~".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StochasticBlock {
    pub circulation_possible: bool,
    pub kappa_lo: f64,
    pub kappa_hi: f64,
    pub tau: Option<usize>,
    pub theta: Option<usize>,
    pub beta21: Option<f64>,
    pub beta22: Option<f64>,
    pub beta23: Option<f64>,
    pub beta24: Option<f64>,
    pub beta2_lo: Option<f64>,
    pub beta2_hi: Option<f64>,
    pub beta3: Option<f64>,
    /// Which case applied, in words.
    pub branch: String,
    pub region: Option<AdmissibleRegion>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Block {
    pub kind: BlockKind,
    /// Interval indices `p` covered, `(K_p, K_{p+1})`, inclusive.
    pub first: usize,
    pub last: usize,
    /// Global index of the block's `K_0`.
    pub base: usize,
    pub m: Option<usize>,
    pub r: Option<usize>,
    /// `r < 2`: outside the shape the block thresholds were derived for.
    pub short: bool,
    pub beta0: Option<f64>,
    pub beta1: Option<f64>,
    pub beta0_monotone: Option<bool>,
    pub beta1_monotone: Option<bool>,
    pub stochastic: Option<StochasticBlock>,
    /// Where the block's d/c recursion runs.
    pub dc: Option<DcSetup>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockDecomposition {
    pub map_name: String,
    pub j0: usize,
    pub sides: Sides,
    /// `m_0, m_1, ...` in construction order.
    pub markers: Vec<usize>,
    pub blocks: Vec<Block>,
    /// `max{L^-_{j0}/(1+L^-_{j0}), L^+_0/(1+L^+_0)}`.
    pub comb_bound: f64,
    pub global_bound: f64,
}

fn next_in(set: &[usize], after: usize) -> Option<usize> {
    set.iter().copied().find(|&j| j > after)
}

/// Block layout without thresholds: `(kind, first, last, base, m, r)` plus the markers.
#[allow(clippy::type_complexity)]
pub fn block_layout(sides: &Sides, j0: usize) -> (Vec<(BlockKind, usize, usize, Option<(usize, usize)>)>, Vec<usize>) {
    let mut out = Vec::new();
    let mut markers = Vec::new();
    let last_p = j0 - 1;
    let m0 = if sides.i_minus.contains(&0) {
        match next_in(&sides.i_plus, 0) {
            Some(m) => {
                out.push((BlockKind::V0, 0, 2 * m - 1, None));
                m
            }
            None => {
                out.push((BlockKind::V0, 0, last_p, None));
                markers.push(sides.i0 + 1);
                return (out, markers);
            }
        }
    } else {
        0
    };
    markers.push(m0);
    let mut s = 0;
    let mut m_even = m0;
    loop {
        let Some(m_odd) = next_in(&sides.i_minus, m_even) else {
            out.push((BlockKind::VTilde, 2 * m_even, last_p, None));
            break;
        };
        markers.push(m_odd);
        let m = m_odd - m_even - 1;
        match next_in(&sides.i_plus, m_odd) {
            None => {
                let r = sides.i0 + 2 - m_odd;
                out.push((BlockKind::VOdd(s), 2 * m_even, last_p, Some((m, r))));
                break;
            }
            Some(m_next) => {
                markers.push(m_next);
                let r = m_next - m_odd + 1;
                out.push((BlockKind::VOdd(s), 2 * m_even, 2 * m_next - 1, Some((m, r))));
                m_even = m_next;
                s += 1;
            }
        }
    }
    (out, markers)
}

/// Equilibria of one block, re-indexed from its own `K_0`; the last entry may be `+inf`.
#[derive(Debug, Clone)]
struct Local {
    k: Vec<f64>,
    truncation: f64,
}

impl Local {
    fn at(&self, j: usize) -> f64 {
        self.k[j]
    }
    fn fin(&self, j: usize) -> f64 {
        let v = self.k[j];
        if v.is_finite() {
            v
        } else {
            self.truncation
        }
    }
}

struct BlockCalc<'a> {
    map: &'a MapSpec,
    local: Local,
    m: usize,
    r: usize,
    floor: f64,
    exec: Exec,
}

impl BlockCalc<'_> {
    fn g(&self, beta: f64) -> impl Fn(f64) -> f64 + '_ {
        move |x| g_of(self.map, beta, x)
    }

    fn end(&self) -> usize {
        2 * (self.m + self.r)
    }

    fn g_m(&self) -> f64 {
        let l = &self.local;
        let v = max_on(&|x| self.map.eval_or_nan(x), l.at(0), l.at(2 * self.m + 1), EXTREMUM_GRID);
        v.min(l.fin(self.end()))
    }

    fn setup(&self) -> DcSetup {
        let l = &self.local;
        let c0 = l.at(2 * self.m + 3);
        DcSetup { left: l.at(0), d0: l.at(2 * self.m + 1), c0, right: self.g_m().max(c0) }
    }

    fn beta0(&self) -> (Option<f64>, bool) {
        let l = &self.local;
        let end = self.end();
        let (k0, k1) = (l.at(0), l.at(1));
        let top = l.at(end);
        let pred = |b: f64| {
            let f = self.g(b);
            if min_on(&f, k1, l.fin(end), EXTREMUM_GRID) <= k0 {
                return false;
            }
            top.is_infinite() || max_on(&f, k0, l.at(end - 1), EXTREMUM_GRID) < top
        };
        let s = infimum_search(&pred, self.floor, 1.0 - 1e-9, 200, 1e-5, self.exec);
        (s.value, s.monotone)
    }

    fn beta1(&self, beta0: f64) -> Result<(f64, bool)> {
        let l = &self.local;
        let setup = self.setup();
        if setup.right <= l.at(2 * self.m + 3) {
            return Ok((beta0, true));
        }
        let (lt, rb) = (l.at(2 * self.m + 1), l.at(2 * self.m + 3));
        let pred = |b: f64| cycle_free(self.map, b, &setup, lt, rb, DEFAULT_MAX_K).0;
        let hi = 1.0 - 1e-3;
        if !pred(hi) {
            return Err(Error::Analysis(format!("block cycle predicate fails at control {hi}")));
        }
        let s = infimum_search(&pred, beta0, hi, 400, 1e-5, self.exec);
        Ok((s.value.expect("true at upper end"), s.monotone))
    }

    fn stochastic(&self, beta0: f64, beta1: f64) -> StochasticBlock {
        let l = &self.local;
        let m = self.m;
        let setup = self.setup();
        let kl = kappa_lo(self.map, beta0, l.at(0), l.at(2 * m + 1));
        let kh = kappa_hi(self.map, beta0, l.at(2 * m + 3), setup.right);
        let f0 = self.g(beta0);
        let possible = f0(kl) > l.at(2 * m + 3) && f0(kh) < l.at(2 * m + 1);
        let mut out = StochasticBlock {
            circulation_possible: possible,
            kappa_lo: kl,
            kappa_hi: kh,
            tau: None,
            theta: None,
            beta21: None,
            beta22: None,
            beta23: None,
            beta24: None,
            beta2_lo: None,
            beta2_hi: None,
            beta3: None,
            branch: String::new(),
            region: None,
        };
        let deterministic = |out: &mut StochasticBlock, why: &str| {
            out.branch = why.to_string();
            out.region = Some(AdmissibleRegion::deterministic(beta1));
        };
        if !possible {
            deterministic(&mut out, "no circulation at beta0: noise is unnecessary");
            return out;
        }
        let tau = (0..=m).find(|&s| l.at(2 * s + 1) >= kl).unwrap_or(m);
        let top_s = self.m + self.r - 1;
        let theta = (m + 1..=top_s).rev().find(|&s| l.at(2 * s + 1) <= kh).unwrap_or(m + 1);
        out.tau = Some(tau);
        out.theta = Some(theta);
        let (kt0, kt1) = (l.at(2 * tau), l.at(2 * tau + 1));
        let (kh1, kh2) = (l.at(2 * theta + 1), l.fin(2 * theta + 2));
        let kh2_raw = l.at(2 * theta + 2);
        let (k2m1, k2m3) = (l.at(2 * m + 1), l.at(2 * m + 3));
        let hi = 1.0 - 1e-9;
        let n = 400;
        let tol = 1e-5;
        let b21 = infimum_search(
            &|b| {
                let f = self.g(b);
                (tau == m || max_on(&f, kt1, k2m1, EXTREMUM_GRID) < k2m3)
                    && max_on(&f, kt0, kt1, EXTREMUM_GRID) < kh2_raw
            },
            beta0,
            hi,
            n,
            tol,
            self.exec,
        )
        .value;
        let b23 = infimum_search(
            &|b| {
                let f = self.g(b);
                (theta == m + 1 || min_on(&f, k2m3, kh1, EXTREMUM_GRID) > kt1) && min_on(&f, kh1, kh2, EXTREMUM_GRID) > kt0
            },
            beta0,
            hi,
            n,
            tol,
            self.exec,
        )
        .value;
        out.beta21 = b21;
        out.beta23 = b23;
        let Some(b21) = b21 else {
            deterministic(&mut out, "first trap condition never holds");
            return out;
        };
        let Some(b23) = b23 else {
            deterministic(&mut out, "second trap condition never holds");
            return out;
        };
        let b22 = supremum_search(&|b| max_on(&self.g(b), kt0, kt1, EXTREMUM_GRID) > kh1, b21, hi, n, tol, self.exec).value;
        let b24 = supremum_search(&|b| min_on(&self.g(b), kh1, kh2, EXTREMUM_GRID) < kt1, b23, hi, n, tol, self.exec).value;
        out.beta22 = b22;
        out.beta24 = b24;
        let Some(b22) = b22 else {
            out.branch = "the left peak never reaches the right interval: beta21 is the bound".into();
            out.region = Some(AdmissibleRegion::deterministic(b21.max(beta1)));
            return out;
        };
        let Some(b24) = b24 else {
            out.branch = "the right trough never reaches the left interval: beta23 is the bound".into();
            out.region = Some(AdmissibleRegion::deterministic(b23.max(beta1)));
            return out;
        };
        if b22 <= b23 {
            deterministic(&mut out, "beta22 <= beta23: circulation impossible");
            return out;
        }
        let (lo, hi2) = (b21.max(b23), b22.min(b24));
        out.beta2_lo = Some(lo);
        out.beta2_hi = Some(hi2);
        if !(hi2 > lo) {
            deterministic(&mut out, "empty intersection: no stochastic improvement");
            return out;
        }
        let pred3 = |b: f64| {
            let f = self.g(b);
            let tr = crate::thresholds::dc_sequences(self.map, b, &setup, DEFAULT_MAX_K);
            max_on(&f, kt0, kt1, EXTREMUM_GRID) < tr.c_hat || min_on(&f, kh1, kh2, EXTREMUM_GRID) > tr.d_hat
        };
        let b3 = infimum_search(&pred3, lo, hi2, n, tol, self.exec).value;
        out.beta3 = b3;
        match b3 {
            None => {
                out.branch = "cycle predicate never holds inside the intersection".into();
                out.region = Some(AdmissibleRegion::deterministic(beta1));
            }
            Some(b3) if b3 - lo < 1e-4 => {
                out.branch = "beta3 equals the lower end: noise is unnecessary".into();
                out.region = Some(AdmissibleRegion::deterministic(lo.max(beta1)));
            }
            Some(b3) => {
                out.branch = "noise lowers the bound".into();
                out.region = Some(AdmissibleRegion::two_sided(lo, b3, hi2, hi2));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BlockOptions {
    pub stochastic: bool,
    pub exec: Exec,
}

impl Default for BlockOptions {
    fn default() -> Self {
        BlockOptions { stochastic: true, exec: Exec::Parallel }
    }
}

/// Full decomposition with per-block thresholds.
pub fn build_blocks(map: &MapSpec, a: &EquilibriumAnalysis, opts: BlockOptions) -> Result<BlockDecomposition> {
    let sides = classify_sides(a)?;
    let j0 = a.j0();
    let (layout, markers) = block_layout(&sides, j0);
    let floor = sides.first_stage_bound;
    let inner = Exec::Sequential;
    let blocks: Vec<Result<Block>> = map_slice(&layout, opts.exec, |&(kind, first, last, mr)| {
        let base = first;
        let mut b = Block {
            kind,
            first,
            last,
            base,
            m: None,
            r: None,
            short: false,
            beta0: None,
            beta1: None,
            beta0_monotone: None,
            beta1_monotone: None,
            stochastic: None,
            dc: None,
        };
        if let Some((m, r)) = mr {
            b.m = Some(m);
            b.r = Some(r);
            b.short = r < 2;
            let end = (base + 2 * (m + r)).min(j0);
            let local = Local { k: (base..=end).map(|j| a.k(j)).collect(), truncation: a.truncation };
            if local.k.len() < 2 * m + 4 {
                return Ok(b);
            }
            let calc = BlockCalc { map, local, m, r: (end - base) / 2 - m, floor, exec: inner };
            b.dc = Some(calc.setup());
            let (b0, mono0) = calc.beta0();
            let b0 = b0.ok_or_else(|| Error::Analysis(format!("block {}: beta0 set is empty", kind.label())))?;
            let (b1, mono1) = calc.beta1(b0).map_err(|e| Error::Analysis(format!("block {}: {e}", kind.label())))?;
            b.beta0 = Some(b0);
            b.beta1 = Some(b1);
            b.beta0_monotone = Some(mono0);
            b.beta1_monotone = Some(mono1);
            if opts.stochastic {
                b.stochastic = Some(calc.stochastic(b0, b1));
            }
        }
        Ok(b)
    });
    let blocks: Vec<Block> = blocks.into_iter().collect::<Result<_>>()?;
    let frac = |v: f64| if v.is_infinite() { 1.0 } else { v / (1.0 + v) };
    let mut comb = frac(sides.l0_plus);
    if let Some(v) = sides.lj0_minus {
        comb = comb.max(frac(v));
    }
    let mut bound = sides.first_stage_bound.max(comb);
    for b in &blocks {
        if let Some(v) = b.beta1 {
            bound = bound.max(v);
        }
    }
    Ok(BlockDecomposition {
        map_name: map.name.clone(),
        j0,
        sides,
        markers,
        blocks,
        comb_bound: comb,
        global_bound: (bound + 1e-3).min(1.0),
    })
}

impl BlockDecomposition {
    pub fn text_summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "map {}: j0 = {}, i0 = {}", self.map_name, self.j0, self.sides.i0);
        let _ = writeln!(s, "I+ = {:?}, I- = {:?}", self.sides.i_plus, self.sides.i_minus);
        let _ = writeln!(s, "bar L = {:.6}, first-stage bound = {:.6}", self.sides.bar_l, self.sides.first_stage_bound);
        for b in &self.blocks {
            let _ = write!(s, "{}: intervals {}..={}", b.kind.label(), b.first, b.last);
            if let (Some(m), Some(r)) = (b.m, b.r) {
                let _ = write!(s, " (m = {m}, r = {r}{})", if b.short { ", short" } else { "" });
            }
            if let (Some(b0), Some(b1)) = (b.beta0, b.beta1) {
                let _ = write!(s, " beta0 = {b0:.6} beta1 = {b1:.6}");
            }
            let _ = writeln!(s);
            if let Some(st) = &b.stochastic {
                let _ = writeln!(s, "  noise: {}", st.branch);
                if let Some(b3) = st.beta3 {
                    let _ = writeln!(s, "  beta2 = ({:.6}, {:.6}), beta3 = {b3:.6}", st.beta2_lo.unwrap_or(f64::NAN), st.beta2_hi.unwrap_or(f64::NAN));
                }
            }
        }
        let _ = writeln!(s, "recommended control >= {:.6}", self.global_bound);
        s
    }

    /// Every interval index `0..j0` appears in exactly one block.
    pub fn tiles(&self) -> bool {
        let mut next = 0;
        for b in &self.blocks {
            if b.first != next || b.last < b.first {
                return false;
            }
            next = b.last + 1;
        }
        next == self.j0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sides(plus: &[usize], minus: &[usize]) -> Sides {
        let i0 = plus.len() + minus.len() - 1;
        Sides {
            i0,
            classes: vec![],
            i_plus: plus.to_vec(),
            i_minus: minus.to_vec(),
            bar_l: 2.0,
            first_stage_bound: 2.0 / 3.0,
            l0_plus: 0.0,
            lj0_minus: None,
        }
    }

    #[test]
    fn alternating_sides_give_two_odd_blocks() {
        let (l, markers) = block_layout(&sides(&[0, 2], &[1, 3]), 8);
        assert_eq!(markers, vec![0, 1, 2, 3]);
        assert_eq!(l.len(), 2);
        assert_eq!((l[0].0, l[0].1, l[0].2, l[0].3), (BlockKind::VOdd(0), 0, 3, Some((0, 2))));
        assert_eq!((l[1].0, l[1].1, l[1].2, l[1].3), (BlockKind::VOdd(1), 4, 7, Some((0, 2))));
    }

    #[test]
    fn all_plus_is_one_tilde_block() {
        let (l, _) = block_layout(&sides(&[0, 1, 2], &[]), 7);
        assert_eq!(l.len(), 1);
        assert_eq!((l[0].0, l[0].1, l[0].2), (BlockKind::VTilde, 0, 6));
    }

    #[test]
    fn leading_minus_opens_v0() {
        let (l, _) = block_layout(&sides(&[1, 2], &[0, 3]), 8);
        assert_eq!((l[0].0, l[0].1, l[0].2), (BlockKind::V0, 0, 1));
        assert_eq!((l[1].0, l[1].1, l[1].2, l[1].3), (BlockKind::VOdd(0), 2, 7, Some((1, 2))));
    }

    #[test]
    fn four_equilibria_single_block() {
        let (l, _) = block_layout(&sides(&[0], &[1]), 4);
        assert_eq!(l.len(), 1);
        assert_eq!((l[0].0, l[0].1, l[0].2, l[0].3), (BlockKind::VOdd(0), 0, 3, Some((0, 2))));
    }
}
