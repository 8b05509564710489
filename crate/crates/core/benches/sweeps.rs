use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pbc_core::bifurcation::{interior_points, sweep, SweepConfig};
use pbc_core::corpus;
use pbc_core::map::find_equilibria;
use pbc_core::par::Exec;
use pbc_core::stochastic::{run_ensemble, EnsembleConfig, NoiseKind};

fn bench_sweep(c: &mut Criterion) {
    let map = corpus::ricker2();
    let a = find_equilibria(&map, Default::default()).unwrap();
    let mut cfg = SweepConfig::new(0.1, 0.3, interior_points(a.k(0), a.g_max, 8));
    cfg.n_alpha = 60;
    cfg.ell = 0.15;
    cfg.transient = 1000;
    cfg.keep = 60;
    let mut g = c.benchmark_group("ricker2_noisy_sweep");
    g.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| sweep(&map, &cfg, exec).unwrap())
        });
    }
    g.finish();
}

fn bench_ensemble(c: &mut Criterion) {
    let map = corpus::piecewise();
    let a = find_equilibria(&map, Default::default()).unwrap();
    let cfg = EnsembleConfig {
        alpha: 0.59,
        ell: 0.04,
        noise: NoiseKind::Bernoulli,
        runs: 200,
        horizon: 5000,
        tol: 1e-6,
        master_seed: 1,
        x0_range: (1e-3, a.k(4) - 1e-3),
        x0_fixed: None,
    };
    let mut g = c.benchmark_group("piecewise_ensemble");
    g.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| run_ensemble(&map, &a.equilibria, &cfg, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_sweep, bench_ensemble);
criterion_main!(benches);
