use pbc_core::bifurcation::{cluster_centers, interior_points, sweep, SweepConfig};
use pbc_core::control::{g_of, pbc_orbit, ControlSchedule, Selector};
use pbc_core::corpus;
use pbc_core::map::find_equilibria;
use pbc_core::par::Exec;
use pbc_core::stochastic::{run_ensemble, run_seed, stoch_orbit, AdmissibleRegion, EnsembleConfig, NoiseKind};
use proptest::prelude::*;

fn maps() -> Vec<pbc_core::MapSpec> {
    vec![corpus::piecewise(), corpus::ricker2(), corpus::ricker3()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn blend_endpoints(i in 0usize..3, x in 0.0f64..2.9) {
        let m = &maps()[i];
        prop_assert_eq!(g_of(m, 0.0, x), m.eval(x).unwrap());
        prop_assert_eq!(g_of(m, 1.0, x), x);
    }

    #[test]
    fn blend_lies_between_x_and_g(i in 0usize..3, x in 0.0f64..2.9, b in 0.001f64..0.998, gap in 0.001f64..0.5) {
        let m = &maps()[i];
        let a = (b + gap).min(0.999);
        prop_assume!(a - b >= 1e-3);
        let gx = m.eval(x).unwrap();
        prop_assume!((gx - x).abs() > 1e-6);
        let (ga, gb) = (g_of(m, a, x), g_of(m, b, x));
        if gx > x {
            prop_assert!(gx > gb && gb > ga && ga > x);
        } else {
            prop_assert!(gx < gb && gb < ga && ga < x);
        }
    }

    #[test]
    fn reparametrization(i in 0usize..3, x in 0.0f64..2.9, mu0 in 0.0f64..0.95, t in 0.0f64..1.0) {
        let m = &maps()[i];
        let mu = mu0 + (1.0 - mu0) * t;
        let hat = (mu - mu0) / (1.0 - mu0);
        let lhs = g_of(m, mu, x);
        let rhs = (1.0 - hat) * g_of(m, mu0, x) + hat * x;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * 1f64.max(m.eval(x).unwrap().abs()).max(x));
    }

    #[test]
    fn random_schedule_stays_in_its_interval(lo in 0.0f64..0.5, w in 0.0f64..0.49, seed in any::<u64>()) {
        let s = ControlSchedule::Interval { lo, hi: lo + w, selector: Selector::Random(seed) };
        prop_assert!(s.stream().take(100).all(|v| v >= lo && v <= lo + w));
    }

    #[test]
    fn orbit_replays_from_seed(x0 in 0.01f64..2.0, seed in any::<u64>()) {
        let m = corpus::ricker2();
        let a = stoch_orbit(&m, 0.5, 0.2, NoiseKind::Uniform, x0, 300, seed).unwrap();
        let b = stoch_orbit(&m, 0.5, 0.2, NoiseKind::Uniform, x0, 300, seed).unwrap();
        prop_assert_eq!(a.states, b.states);
        prop_assert!(a.controls[1..].iter().all(|c| (0.3..=0.7).contains(c)));
    }

    #[test]
    fn noise_samples_in_range(seed in any::<u64>(), sd in 0.05f64..3.0) {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        for k in [NoiseKind::Bernoulli, NoiseKind::Uniform, NoiseKind::TruncatedGaussian(sd)] {
            for _ in 0..50 {
                let v = k.sample(&mut rng);
                prop_assert!((-1.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn cluster_centers_sorted_and_bounded(xs in proptest::collection::vec(-5.0f64..5.0, 1..60), tol in 1e-4f64..0.5) {
        let c = cluster_centers(&xs, tol);
        prop_assert!(!c.is_empty());
        prop_assert!(c.windows(2).all(|w| w[1] - w[0] > tol));
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(c.iter().all(|v| *v >= lo - 1e-12 && *v <= hi + 1e-12));
    }

    #[test]
    fn region_sample_is_admissible(lower in 0.1f64..0.6, gap in 0.01f64..0.2) {
        let target = lower + gap;
        prop_assume!(target < 0.95);
        let r = AdmissibleRegion::four_equilibrium(lower, target);
        let (a, l) = r.sample();
        prop_assert!(r.contains(a, l));
        prop_assert!(a - l > lower && a + l > target && a + l < 1.0);
    }

    #[test]
    fn interior_points_are_interior(lo in -3.0f64..3.0, w in 0.01f64..5.0, n in 1usize..20) {
        let p = interior_points(lo, lo + w, n);
        prop_assert_eq!(p.len(), n);
        prop_assert!(p.iter().all(|x| *x > lo && *x < lo + w));
    }
}

#[test]
fn run_seeds_are_distinct() {
    let mut s: Vec<u64> = (0..2000).map(|i| run_seed(7, i)).collect();
    s.sort_unstable();
    s.dedup();
    assert_eq!(s.len(), 2000);
}

#[test]
fn equilibria_are_inherited_by_iterates() {
    let base = pbc_core::MapSpec::ricker(2.7);
    for k in [2, 3, 4] {
        let m = base.iterate(k).unwrap();
        let a = find_equilibria(&m, Default::default()).unwrap();
        assert!(a.equilibria.iter().any(|x| (x - 1.0).abs() < 1e-9), "iterate {k}");
        for x in &a.equilibria {
            assert!((m.eval(*x).unwrap() - x).abs() < 1e-9);
        }
    }
}

#[test]
fn sweep_does_not_depend_on_execution_mode() {
    let m = corpus::ricker2();
    let mut cfg = SweepConfig::new(0.1, 0.3, interior_points(0.0, 2.0, 4));
    cfg.n_alpha = 12;
    cfg.ell = 0.1;
    cfg.transient = 300;
    cfg.keep = 20;
    let a = sweep(&m, &cfg, Exec::Parallel).unwrap();
    let b = sweep(&m, &cfg, Exec::Sequential).unwrap();
    let flat = |d: &pbc_core::bifurcation::BifurcationDiagram| d.samples.iter().flatten().map(|s| (s.x.to_bits(), s.x0_id, s.seed)).collect::<Vec<_>>();
    assert_eq!(flat(&a), flat(&b));
}

#[test]
fn ensemble_does_not_depend_on_execution_mode() {
    let m = corpus::piecewise();
    let a = find_equilibria(&m, Default::default()).unwrap();
    let cfg = EnsembleConfig {
        alpha: 0.59,
        ell: 0.04,
        noise: NoiseKind::Bernoulli,
        runs: 40,
        horizon: 3000,
        tol: 1e-6,
        master_seed: 3,
        x0_range: (0.01, 2.9),
        x0_fixed: None,
    };
    let p = run_ensemble(&m, &a.equilibria, &cfg, Exec::Parallel).unwrap();
    let s = run_ensemble(&m, &a.equilibria, &cfg, Exec::Sequential).unwrap();
    let mut pb = Vec::new();
    let mut sb = Vec::new();
    p.write_csv(&mut pb).unwrap();
    s.write_csv(&mut sb).unwrap();
    assert_eq!(pb, sb);
}

#[test]
fn controlled_orbits_above_the_bound_settle_on_equilibria() {
    let m = corpus::ricker2();
    for i in 0..30 {
        let x0 = 0.05 + 0.06 * i as f64;
        let o = pbc_orbit(&m, &ControlSchedule::Constant(0.7), x0, 50_000).unwrap();
        assert!(o.converged);
        let x = o.last();
        assert!((m.eval(x).unwrap() - x).abs() <= 1e-8);
    }
}
