//! Compares the data-parallel sweep against the sequential fallback on a
//! representative landscape column. Cells are independent worlds, so the
//! parallel path should scale with cores while producing identical rows.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use resilience_core::harness::{
    sweep, sweep_sequential, AttackKind, Protocol, ScenarioConfig,
};

fn sweep_column(c: &mut Criterion) {
    let mut cfg = ScenarioConfig::for_protocol(Protocol::Frz);
    cfg.attack = AttackKind::ByzFuzz;
    let fs: Vec<u16> = (0..=3).collect();
    let seeds: Vec<u64> = (1..=8).collect();

    assert_eq!(
        sweep(&cfg, &fs, &seeds),
        sweep_sequential(&cfg, &fs, &seeds),
        "parallel and sequential sweeps must agree before timing them"
    );

    let mut group = c.benchmark_group("frz-sweep");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new("parallel", "4f-x8s"), |b| {
        b.iter(|| sweep(&cfg, &fs, &seeds))
    });
    group.bench_function(BenchmarkId::new("sequential", "4f-x8s"), |b| {
        b.iter(|| sweep_sequential(&cfg, &fs, &seeds))
    });
    group.finish();
}

criterion_group!(benches, sweep_column);
criterion_main!(benches);
