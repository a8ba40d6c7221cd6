use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use gge_bench::{chain, preparation};
use gge_core::ensembles::{ChainSystem, TggeOptions};
use gge_core::ion::simulate_preparation;
use gge_core::liouville::{chain_superoperator, steady_state};

fn steady_state_n6(c: &mut Criterion) {
    let s = chain_superoperator(&chain(6), false).unwrap();
    let mut g = c.benchmark_group("exact");
    g.sample_size(10);
    g.bench_function("steady_state_n6", |b| b.iter(|| steady_state(black_box(&s)).unwrap()));
    g.finish();
}

fn tgge_n6(c: &mut Criterion) {
    let sys = ChainSystem::new(&chain(6), 4, false).unwrap();
    let opts = TggeOptions::default();
    c.bench_function("tgge_solve_n6_nc4", |b| b.iter(|| sys.tgge(black_box(0.5), 4, None, &opts).unwrap()));
    c.bench_function("rho_bd_n6", |b| b.iter(|| sys.rho_bd(black_box(0.5)).unwrap()));
}

fn chain_system_n8(c: &mut Criterion) {
    let mut g = c.benchmark_group("setup");
    g.sample_size(10);
    g.bench_function("chain_system_n8", |b| b.iter(|| ChainSystem::new(black_box(&chain(8)), 4, false).unwrap()));
    g.finish();
}

fn ion_preparation(c: &mut Criterion) {
    let p = preparation();
    let mut g = c.benchmark_group("ion");
    g.sample_size(10);
    g.bench_function("simulate_preparation_t100", |b| b.iter(|| simulate_preparation(black_box(&p), 100.0).unwrap()));
    g.finish();
}

criterion_group!(benches, steady_state_n6, tgge_n6, chain_system_n8, ion_preparation);
criterion_main!(benches);
