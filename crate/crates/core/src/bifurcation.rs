//! Sweeps over the control value: post-transient attractor samples, clustering,
//! and the last bifurcation after which only target equilibria remain.

use crate::control::run_orbit;
use crate::error::{Error, Result};
use crate::map::MapSpec;
use crate::par::{map_range, Exec};
use crate::stochastic::{run_seed, NoiseKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;

#[derive(Debug, Clone, Serialize)]
pub struct SweepConfig {
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub n_alpha: usize,
    pub ell: f64,
    pub noise: NoiseKind,
    pub x0_set: Vec<f64>,
    /// Noise seeds per (alpha, x0) pair when `ell > 0`.
    pub seeds: usize,
    pub transient: usize,
    pub keep: usize,
    pub master_seed: u64,
}

impl SweepConfig {
    pub fn new(alpha_lo: f64, alpha_hi: f64, x0_set: Vec<f64>) -> SweepConfig {
        SweepConfig {
            alpha_lo,
            alpha_hi,
            n_alpha: 400,
            ell: 0.0,
            noise: NoiseKind::Bernoulli,
            x0_set,
            seeds: 4,
            transient: 2000,
            keep: 120,
            master_seed: 0,
        }
    }

    pub fn alphas(&self) -> Vec<f64> {
        let n = self.n_alpha;
        if n == 1 {
            return vec![self.alpha_lo];
        }
        (0..n).map(|i| self.alpha_lo + (self.alpha_hi - self.alpha_lo) * i as f64 / (n - 1) as f64).collect()
    }

    pub fn step(&self) -> f64 {
        if self.n_alpha < 2 {
            0.0
        } else {
            (self.alpha_hi - self.alpha_lo) / (self.n_alpha - 1) as f64
        }
    }

    fn seeds_used(&self) -> usize {
        if self.ell > 0.0 {
            self.seeds.max(1)
        } else {
            1
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha_lo < self.alpha_hi && self.alpha_hi < 1.0 && self.alpha_lo >= 0.0) {
            return Err(Error::Parameter(format!("need 0 <= lo < hi < 1, got [{}, {}]", self.alpha_lo, self.alpha_hi)));
        }
        if self.n_alpha < 2 || self.transient < 200 || self.keep == 0 || self.x0_set.is_empty() {
            return Err(Error::Parameter("need n_alpha >= 2, transient >= 200, keep >= 1 and at least one x0".into()));
        }
        if self.ell < 0.0 || self.alpha_hi + self.ell > 1.0 {
            return Err(Error::Parameter(format!("noise amplitude {} pushes the control above 1", self.ell)));
        }
        Ok(())
    }
}

/// `count` evenly spaced interior points of `(lo, hi)`.
pub fn interior_points(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|i| lo + (hi - lo) * i as f64 / (count + 1) as f64).collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Sample {
    pub x: f64,
    pub x0_id: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BifurcationDiagram {
    pub config: SweepConfig,
    pub alphas: Vec<f64>,
    pub samples: Vec<Vec<Sample>>,
    /// Orbits that left the domain, per alpha.
    pub escaped: Vec<usize>,
    /// Some grid values have `alpha - ell < 0`, so negative controls were drawn.
    pub negative_controls: bool,
}

pub fn sweep(map: &MapSpec, cfg: &SweepConfig, exec: Exec) -> Result<BifurcationDiagram> {
    cfg.validate()?;
    let alphas = cfg.alphas();
    let ns = cfg.seeds_used();
    let per_alpha = cfg.x0_set.len() * ns;
    let rows = map_range(alphas.len(), exec, |ai| {
        let alpha = alphas[ai];
        let mut out = Vec::with_capacity(per_alpha * cfg.keep);
        let mut escaped = 0;
        for (xi, &x0) in cfg.x0_set.iter().enumerate() {
            for s in 0..ns {
                let seed = if cfg.ell > 0.0 { run_seed(cfg.master_seed, (ai * per_alpha + xi * ns + s) as u64) } else { 0 };
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let orbit = if cfg.ell > 0.0 {
                    run_orbit(map, x0, cfg.transient + cfg.keep, || alpha + cfg.ell * cfg.noise.sample(&mut rng))
                } else {
                    run_orbit(map, x0, cfg.transient + cfg.keep, || alpha)
                };
                if orbit.escaped {
                    escaped += 1;
                    continue;
                }
                let st = &orbit.states;
                for k in 0..cfg.keep {
                    let n = cfg.transient + 1 + k;
                    // Orbits that settled early stay at their last state.
                    let x = *st.get(n).unwrap_or(st.last().expect("nonempty"));
                    out.push(Sample { x, x0_id: xi as u32, seed });
                }
            }
        }
        (out, escaped)
    });
    let (samples, escaped) = rows.into_iter().unzip();
    Ok(BifurcationDiagram { config: cfg.clone(), alphas, samples, escaped, negative_controls: cfg.alpha_lo - cfg.ell < 0.0 })
}

impl BifurcationDiagram {
    /// CSV with columns `alpha, sample, x0_id, seed`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["alpha", "sample", "x0_id", "seed"])?;
        for (a, row) in self.alphas.iter().zip(&self.samples) {
            for s in row {
                wr.write_record([format!("{a}"), format!("{}", s.x), s.x0_id.to_string(), s.seed.to_string()])?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    pub fn default_cluster_tol(&self) -> f64 {
        if self.config.ell > 0.0 {
            2e-2
        } else {
            5e-3
        }
    }

    pub fn default_band(&self) -> f64 {
        if self.config.ell > 0.0 {
            5e-3
        } else {
            1e-3
        }
    }
}

/// Single-linkage clusters of a set of reals; returns the cluster means.
pub fn cluster_centers(xs: &[f64], tol: f64) -> Vec<f64> {
    let mut v: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return v;
    }
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mut out = Vec::new();
    let (mut sum, mut n) = (v[0], 1usize);
    for w in v.windows(2) {
        if w[1] - w[0] > tol {
            out.push(sum / n as f64);
            sum = 0.0;
            n = 0;
        }
        sum += w[1];
        n += 1;
    }
    out.push(sum / n as f64);
    out
}

pub fn attractor_sets(d: &BifurcationDiagram, tol: f64) -> Vec<Vec<f64>> {
    d.samples
        .iter()
        .map(|row| cluster_centers(&row.iter().map(|s| s.x).collect::<Vec<_>>(), tol))
        .collect()
}

/// Smallest grid value from which on every cluster center is within `band`
/// of a target. `None` when the last grid value already fails.
pub fn last_bifurcation(alphas: &[f64], centers: &[Vec<f64>], targets: &[f64], band: f64) -> Option<f64> {
    let ok = |cs: &Vec<f64>| !cs.is_empty() && cs.iter().all(|c| targets.iter().any(|t| (c - t).abs() <= band));
    let mut best = None;
    for (a, cs) in alphas.iter().zip(centers).rev() {
        if ok(cs) {
            best = Some(*a);
        } else {
            break;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SvgAxes {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

pub const SVG_WIDTH: u32 = 1200;
pub const SVG_HEIGHT: u32 = 800;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

/// Scatter plot of a diagram, one 1x1 rect per occupied pixel.
pub fn render_svg(d: &BifurcationDiagram, axes: SvgAxes, title: &str) -> String {
    let w = SVG_WIDTH as f64;
    let h = SVG_HEIGHT as f64;
    let pw = w - LEFT - RIGHT;
    let ph = h - TOP - BOTTOM;
    let px = |a: f64| LEFT + (a - axes.x_lo) / (axes.x_hi - axes.x_lo) * pw;
    let py = |x: f64| TOP + (1.0 - (x - axes.y_lo) / (axes.y_hi - axes.y_lo)) * ph;
    let mut pixels = BTreeSet::new();
    for (a, row) in d.alphas.iter().zip(&d.samples) {
        let cx = px(*a).floor();
        if cx < LEFT || cx >= LEFT + pw {
            continue;
        }
        for s in row {
            let cy = py(s.x).floor();
            if cy >= TOP && cy < TOP + ph {
                pixels.insert((cx as u32, cy as u32));
            }
        }
    }
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">"#);
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<rect x="{LEFT:.1}" y="{TOP:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="black" stroke-width="1"/>"#);
    for i in 0..=5 {
        let a = axes.x_lo + (axes.x_hi - axes.x_lo) * i as f64 / 5.0;
        let x = px(a);
        let _ = writeln!(s, r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/>"#, TOP + ph, TOP + ph + 6.0);
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" font-size="14" text-anchor="middle">{a:.3}</text>"#, TOP + ph + 22.0);
        let v = axes.y_lo + (axes.y_hi - axes.y_lo) * i as f64 / 5.0;
        let y = py(v);
        let _ = writeln!(s, r#"<line x1="{:.1}" y1="{y:.1}" x2="{LEFT:.1}" y2="{y:.1}" stroke="black"/>"#, LEFT - 6.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="14" text-anchor="end">{v:.3}</text>"#, LEFT - 9.0, y + 5.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="16" text-anchor="middle">alpha</text>"#, LEFT + pw / 2.0, h - 12.0);
    let _ = writeln!(s, r#"<text x="{:.1}" y="20.0" font-size="16" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, xml_escape(title));
    let _ = writeln!(s, r#"<g fill="black">"#);
    for (x, y) in pixels {
        let _ = writeln!(s, r#"<rect x="{x}" y="{y}" width="1" height="1"/>"#);
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

fn xml_escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clustering() {
        assert!(cluster_centers(&[], 0.1).is_empty());
        let c = cluster_centers(&[1.0, 1.001, 2.0, 2.002, 0.999], 0.01);
        assert_eq!(c.len(), 2);
        assert!((c[0] - 1.0).abs() < 1e-9 && (c[1] - 2.001).abs() < 1e-9);
    }

    #[test]
    fn last_bifurcation_takes_the_stable_suffix() {
        let alphas = [0.1, 0.2, 0.3, 0.4];
        let centers = vec![vec![0.5], vec![1.0], vec![0.7, 1.0], vec![1.0]];
        assert_eq!(last_bifurcation(&alphas, &centers, &[1.0], 1e-3), Some(0.4));
        let centers = vec![vec![0.5], vec![1.0], vec![1.0], vec![1.0]];
        assert_eq!(last_bifurcation(&alphas, &centers, &[1.0], 1e-3), Some(0.2));
        let centers = vec![vec![1.0], vec![1.0], vec![1.0], vec![0.3]];
        assert_eq!(last_bifurcation(&alphas, &centers, &[1.0], 1e-3), None);
    }

    #[test]
    fn grid_is_inclusive() {
        let c = SweepConfig { n_alpha: 5, ..SweepConfig::new(0.1, 0.3, vec![0.5]) };
        let a = c.alphas();
        assert_eq!(a.len(), 5);
        assert_eq!(a[0], 0.1);
        assert!((a[4] - 0.3).abs() < 1e-15);
    }
}
