use std::hint::black_box;

use clearing_core::convex::solve_convexified;
use clearing_core::demand::rho;
use clearing_core::equilibrium::convex_hull_pricing;
use clearing_core::exact::solve_welfare;
use clearing_core::random::{gen_random_market, RandomMarketSpec};
use clearing_core::{Market, Settings};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn markets() -> Vec<(usize, Market)> {
    [1, 4, 24].into_iter().map(|k| (k, gen_random_market(&RandomMarketSpec::new(k, 8), 42))).collect()
}

fn convexified(c: &mut Criterion) {
    let s = Settings::default();
    let mut g = c.benchmark_group("solve_convexified");
    for (k, m) in markets() {
        g.bench_with_input(BenchmarkId::from_parameter(k), &m, |b, m| b.iter(|| solve_convexified(black_box(m), &s).unwrap()));
    }
    g.finish();
}

fn welfare(c: &mut Criterion) {
    let s = Settings::default();
    let mut g = c.benchmark_group("solve_welfare");
    for (k, m) in markets() {
        g.bench_with_input(BenchmarkId::from_parameter(k), &m, |b, m| b.iter(|| solve_welfare(black_box(m), &s).unwrap()));
    }
    g.finish();
}

fn nonconvexity(c: &mut Criterion) {
    let s = Settings::default();
    let mut g = c.benchmark_group("rho");
    for (k, m) in markets() {
        let prices = solve_convexified(&m, &s).unwrap().prices;
        g.bench_with_input(BenchmarkId::from_parameter(k), &m, |b, m| {
            b.iter(|| m.agents.iter().map(|a| rho(a, black_box(&prices), &s).unwrap()).sum::<f64>())
        });
    }
    g.finish();
}

fn hull_pricing(c: &mut Criterion) {
    let s = Settings::default();
    let m = gen_random_market(&RandomMarketSpec::new(24, 8), 7);
    c.bench_function("convex_hull_pricing/24", |b| b.iter(|| convex_hull_pricing(black_box(&m), &s).unwrap()));
}

criterion_group!(benches, convexified, welfare, nonconvexity, hull_pricing);
criterion_main!(benches);
