//! Extrema of a scalar function on an interval: grid scan, golden-section
//! refinement, and tie rules matching sup/inf-of-argset definitions.

use serde::{Deserialize, Serialize};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtremumMode {
    /// Maximum; among near-ties the largest argument wins.
    MaxLargestArg,
    /// Minimum; among near-ties the smallest argument wins.
    MinSmallestArg,
}

/// Golden-section search for a maximum of `f` on `[a, b]`. Returns `(x, f(x))`.
pub fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iters = 0;
    while (b - a).abs() > tol && iters < 200 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        iters += 1;
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    let mut best = (x, fx);
    for (p, v) in [(c, fc), (d, fd)] {
        if v > best.1 {
            best = (p, v);
        }
    }
    best
}

/// Extremum of `f` on `[a, b]` using `n` grid points plus golden-section refinement.
///
/// Values within `1e-9` of the extreme count as ties, resolved to the largest
/// argument for maxima and the smallest for minima. NaN values are skipped.
pub fn interval_extremum(f: &impl Fn(f64) -> f64, a: f64, b: f64, mode: ExtremumMode, n: usize) -> (f64, f64) {
    let sign = match mode {
        ExtremumMode::MaxLargestArg => 1.0,
        ExtremumMode::MinSmallestArg => -1.0,
    };
    if !(b > a) {
        return (a, f(a));
    }
    let h = |x: f64| {
        let v = f(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            sign * v
        }
    };
    let n = n.max(2);
    let xs: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    let vs: Vec<f64> = xs.iter().map(|&x| h(x)).collect();
    let mut best_i = 0;
    for i in 1..=n {
        if vs[i] > vs[best_i] {
            best_i = i;
        }
    }
    let mut best = (xs[best_i], vs[best_i]);
    let lo = xs[best_i.saturating_sub(1)];
    let hi = xs[(best_i + 1).min(n)];
    if hi > lo {
        let (x, v) = golden_max(&h, lo, hi, 1e-10 * (b - a).max(1e-300));
        if v > best.1 {
            best = (x, v);
        }
    }
    // Tie rule across the whole grid.
    let tie = |v: f64| v >= best.1 - 1e-9;
    match mode {
        ExtremumMode::MaxLargestArg => {
            if let Some(i) = (0..=n).rev().find(|&i| tie(vs[i])) {
                if xs[i] > best.0 + (b - a) / n as f64 {
                    best = (xs[i], vs[i]);
                }
            }
        }
        ExtremumMode::MinSmallestArg => {
            if let Some(i) = (0..=n).find(|&i| tie(vs[i])) {
                if xs[i] < best.0 - (b - a) / n as f64 {
                    best = (xs[i], vs[i]);
                }
            }
        }
    }
    (best.0, sign * best.1)
}

/// Maximum value of `f` on `[a, b]` (grid plus refinement).
pub fn max_on(f: &impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    interval_extremum(f, a, b, ExtremumMode::MaxLargestArg, n).1
}

/// Minimum value of `f` on `[a, b]` (grid plus refinement).
pub fn min_on(f: &impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    interval_extremum(f, a, b, ExtremumMode::MinSmallestArg, n).1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_max_is_right_end() {
        let (x, v) = interval_extremum(&|x| x, 0.0, 1.0, ExtremumMode::MaxLargestArg, 10_000);
        assert_eq!((x, v), (1.0, 1.0));
    }

    #[test]
    fn smooth_interior_max() {
        let (x, v) = interval_extremum(&|x: f64| -(x - 0.3337).powi(2), 0.0, 1.0, ExtremumMode::MaxLargestArg, 1000);
        assert!((x - 0.3337).abs() < 1e-6 && v.abs() < 1e-12);
    }

    #[test]
    fn plateau_ties_pick_extreme_arguments() {
        let f = |x: f64| if (0.2..=0.6).contains(&x) { 1.0 } else { 0.0 };
        let (x, _) = interval_extremum(&f, 0.0, 1.0, ExtremumMode::MaxLargestArg, 1000);
        assert!((x - 0.6).abs() < 2e-3, "{x}");
        let g = |x: f64| -f(x);
        let (x, _) = interval_extremum(&g, 0.0, 1.0, ExtremumMode::MinSmallestArg, 1000);
        assert!((x - 0.2).abs() < 2e-3, "{x}");
    }

    #[test]
    fn golden_finds_peak() {
        let (x, _) = golden_max(&|x: f64| (x * 3.0).sin(), 0.0, 1.0, 1e-12);
        assert!((x - std::f64::consts::FRAC_PI_6).abs() < 1e-6);
    }
}
