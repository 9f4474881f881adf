use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hetnet_core::association::{assoc_stats, pmf_active_offloaded};
use hetnet_core::coverage::{laplace_derivative_scaled, Analyzer, LaplaceField, Method};
use hetnet_core::montecarlo::Simulator;
use hetnet_core::Config;

fn analytic(c: &mut Criterion) {
    let (params, scheme, numerics) = Config::default().resolve().unwrap();
    c.bench_function("assoc_stats+pmf", |b| {
        b.iter(|| {
            let s = assoc_stats(&params.normalize_power_ratio(), &numerics).unwrap();
            pmf_active_offloaded(&s, &numerics).unwrap()
        })
    });
    let field = LaplaceField { density: 1e-4, alpha: 4.0, radius: 30.0, s: 30f64.powi(4) };
    for m in [1, 4, 8] {
        c.bench_with_input(BenchmarkId::new("laplace_derivative", m), &m, |b, &m| {
            b.iter(|| laplace_derivative_scaled(m, &field).unwrap())
        });
    }
    let a = Analyzer::new(&params, &numerics).unwrap();
    let mut g = c.benchmark_group("rate_coverage");
    g.sample_size(10);
    for method in [Method::Mla, Method::Full] {
        g.bench_function(method.as_str(), |b| b.iter(|| a.rate_coverage(&scheme, 5e5, method).unwrap().overall));
    }
    g.bench_function("optimal_in_dof", |b| b.iter(|| a.optimal_in_dof(5e5).unwrap().arg));
    g.finish();
}

fn simulation(c: &mut Criterion) {
    let (params, scheme, numerics) = Config::default().resolve().unwrap();
    let sim = Simulator::new(&params, &numerics).unwrap();
    let mut g = c.benchmark_group("simulator");
    g.sample_size(10);
    g.bench_function("rate_coverage_1000_drops", |b| b.iter(|| sim.rate_coverage(&scheme, &[5e5], 1000).unwrap()));
    g.finish();
}

criterion_group!(benches, analytic, simulation);
criterion_main!(benches);
