use pbc_core::blocks::{build_blocks, BlockKind, BlockOptions};
use pbc_core::control::g_of;
use pbc_core::corpus;
use pbc_core::map::{find_equilibria, one_sided_lipschitz, sign_pattern_check, Side};
use pbc_core::par::Exec;
use pbc_core::stochastic::{wilson_interval, NoiseKind};
use pbc_core::thresholds::{analyze_thresholds, certify_alpha0, dc_sequences, find_two_cycles, DcSetup, FourEq, ThresholdOptions, K0};
use pbc_core::MapSpec;

fn ricker(r: f64, x: f64) -> f64 {
    x * (r * (1.0 - x)).exp()
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (f(m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[test]
fn ricker2_equilibria_match_direct_bisection() {
    let h = |x: f64| ricker(2.7, ricker(2.7, x)) - x;
    let expected = [bisect(h, 0.1, 0.5), 1.0, bisect(h, 1.5, 2.0)];
    let a = find_equilibria(&corpus::ricker2(), Default::default()).unwrap();
    assert_eq!(a.equilibria.len(), 4);
    assert!(a.upper_infinite);
    assert_eq!(a.equilibria[0], 0.0);
    for (got, want) in a.equilibria[1..].iter().zip(expected) {
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
    for (got, want) in a.equilibria[1..].iter().zip([0.214, 1.0, 1.786]) {
        assert!((got - want).abs() < 1e-3);
    }
    let gmax = (0..=200_000).map(|i| ricker(2.7, ricker(2.7, 3.0 * i as f64 / 200_000.0))).fold(0.0, f64::max);
    assert!((a.g_max - gmax).abs() < 1e-6, "{} vs {gmax}", a.g_max);
    assert!((a.g_max - 2.027).abs() < 1e-3);
}

#[test]
fn composition_matches_nested_calls() {
    let m = corpus::ricker3();
    for i in 0..200 {
        let x = 4.0 * i as f64 / 199.0;
        let want = ricker(3.5, ricker(3.5, ricker(3.5, x)));
        assert!((m.eval(x).unwrap() - want).abs() <= 1e-12 * (1.0 + want.abs()));
    }
}

#[test]
fn piecewise_equilibria_and_constants() {
    let m = corpus::piecewise();
    let a = find_equilibria(&m, Default::default()).unwrap();
    let want = [0.0, 1.0, 1.1, 1.2, 41.0 / 14.0];
    assert_eq!(a.equilibria.len(), 5);
    for (g, w) in a.equilibria.iter().zip(want) {
        assert!((g - w).abs() < 1e-9);
    }
    let right = one_sided_lipschitz(&m, 1.0, Side::Right, (1.0, 1.1)).unwrap();
    assert!((right - 27.0 / 23.0).abs() < 1e-3, "{right}");
    let left = one_sided_lipschitz(&m, 1.0, Side::Left, (0.0, 1.0)).unwrap();
    assert!(left.is_infinite());
    let full = find_equilibria(&corpus::piecewise_full(), Default::default()).unwrap();
    assert!(full.equilibria.iter().any(|k| (k - 3.0).abs() < 1e-9));
}

#[test]
fn ricker2_left_constant_exceeds_9_8() {
    let m = corpus::ricker2();
    let a = find_equilibria(&m, Default::default()).unwrap();
    let v = one_sided_lipschitz(&m, a.k(1), Side::Left, (0.0, a.k(1))).unwrap();
    assert!(v > 9.8);
}

#[test]
fn broken_sign_pattern_is_reported() {
    let m = MapSpec::from_json_str(r#"{"kind": "piecewise", "domain": [0, 2], "branches": [{"lo": 0, "hi": 2, "expr": "x - 0.5*sin(pi*x)"}]}"#).unwrap();
    let a = find_equilibria(&m, Default::default()).unwrap();
    let v = sign_pattern_check(&a).unwrap_err();
    assert_eq!(v.interval, 0);
}

#[test]
fn piecewise_thresholds() {
    let m = corpus::piecewise();
    let a = find_equilibria(&m, Default::default()).unwrap();
    let t = analyze_thresholds(&m, &a, ThresholdOptions { trace_beta: Some(0.58), exec: Exec::Sequential, ..Default::default() }).unwrap();
    assert_eq!(t.fit.delta, 0.0);
    assert!((t.alpha0 - 0.54).abs() < 1e-3, "{}", t.alpha0);
    assert!((t.underline_alpha - 0.604).abs() < 5e-3, "{}", t.underline_alpha);
    assert_eq!(t.k0, K0::Infinite);
    assert!(t.d_hat > 0.9 && t.d_hat < 1.0 && t.c_hat > 1.2 && t.c_hat < 1.5);
    let near = |p: f64, q: f64| t.two_cycles.iter().any(|(a, b)| (a - p).abs() < 5e-3 && (b - q).abs() < 5e-3);
    assert!(near(0.9, 1.5), "{:?}", t.two_cycles);
    assert!(near(0.975, 1.276), "{:?}", t.two_cycles);
    for (p, q) in &t.two_cycles {
        assert!((g_of(&m, 0.58, *p) - q).abs() < 1e-9 && (g_of(&m, 0.58, *q) - p).abs() < 1e-9);
    }
}

#[test]
fn piecewise_has_no_two_cycle_past_underline_alpha() {
    let m = corpus::piecewise();
    for beta in [0.61, 0.7, 0.9] {
        let c = find_two_cycles(&m, beta, (0.0, 41.0 / 14.0));
        assert!(c.is_empty(), "beta {beta}: {c:?}");
    }
}

#[test]
fn dc_sequences_nest_at_058() {
    let m = corpus::piecewise();
    let setup = DcSetup { left: 0.0, d0: 1.0, c0: 1.2, right: 2.3285714 };
    let tr = dc_sequences(&m, 0.58, &setup, 256);
    assert!(tr.d.windows(2).all(|w| w[1] <= w[0]));
    assert!(tr.c.windows(2).all(|w| w[1] >= w[0]));
    assert!(tr.d_hat >= 0.9749 - 5e-3 && tr.c_hat <= 1.2755 + 5e-3);
}

#[test]
fn ricker2_alpha0_certificate() {
    let m = corpus::ricker2();
    let a = find_equilibria(&m, Default::default()).unwrap();
    let eq = FourEq::from_analysis(&a).unwrap();
    let iv = certify_alpha0(&m, &eq, 0.249, 400);
    assert!(iv.iter().any(|d| d.hi > 0.022), "{iv:?}");
}

#[test]
fn ricker3_first_stage_bound() {
    let m = corpus::ricker3();
    let a = find_equilibria(&m, Default::default()).unwrap();
    assert_eq!(a.equilibria.iter().filter(|k| **k > 0.0).count(), 7);
    let b = build_blocks(&m, &a, BlockOptions { stochastic: false, exec: Exec::Parallel }).unwrap();
    assert!((b.sides.bar_l - 15.62).abs() < 0.05, "{}", b.sides.bar_l);
    assert!((b.sides.first_stage_bound - 0.94).abs() < 5e-3);
    assert!(b.tiles());
}

#[test]
fn ricker4_block_split() {
    let m = corpus::ricker4();
    let a = find_equilibria(&m, Default::default()).unwrap();
    let b = build_blocks(&m, &a, BlockOptions { stochastic: false, exec: Exec::Parallel }).unwrap();
    let spans: Vec<(BlockKind, usize, usize)> = b.blocks.iter().map(|x| (x.kind, x.first, x.last)).collect();
    assert_eq!(spans, vec![(BlockKind::VOdd(0), 0, 3), (BlockKind::VOdd(1), 4, 7)]);
}

#[test]
fn wilson_matches_closed_form() {
    let (lo, hi) = wilson_interval(200, 200);
    let z: f64 = 1.959963984540054;
    let n = 200.0;
    let want = 1.0 / (1.0 + z * z / n);
    assert!((lo - want).abs() < 1e-12 && hi == 1.0);
    let (lo, hi) = wilson_interval(50, 100);
    assert!((lo - 0.4038).abs() < 1e-4 && (hi - 0.5962).abs() < 1e-4);
}

#[test]
fn noise_tails() {
    assert!((NoiseKind::Uniform.upper_tail(0.9) - 0.05).abs() < 1e-12);
    assert_eq!(NoiseKind::Bernoulli.upper_tail(0.9), 0.5);
    let t = NoiseKind::TruncatedGaussian(1.0).upper_tail(0.5);
    assert!((t - 0.308_537_538_725_986_9).abs() < 1e-9, "{t}");
}
