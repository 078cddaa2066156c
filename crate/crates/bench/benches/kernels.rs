use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dysonlab::dynamics::{step_coulomb_2d, step_dyson_1d, BridgeKey};
use dysonlab::ensembles::{
    default_step_size, disc_start_2d, mala_chain_1d, quantile_start_1d, ChainConfig,
};
use dysonlab::game::circumcircle_sum;
use dysonlab::transforms::{pair_sums_1d, pair_sums_2d};
use dysonlab::GameParams;

const SIZES: [usize; 3] = [50, 200, 800];

fn pair_sums(c: &mut Criterion) {
    let mut g = c.benchmark_group("pair_sums");
    for n in SIZES {
        let p = GameParams::new(n, 2.0, 1.0).unwrap();
        let line = quantile_start_1d(&p).unwrap();
        let plane = disc_start_2d(&p).unwrap();
        g.bench_with_input(BenchmarkId::new("line", n), &n, |b, &n| {
            b.iter(|| pair_sums_1d(&line, black_box(n / 2)))
        });
        g.bench_with_input(BenchmarkId::new("plane", n), &n, |b, &n| {
            b.iter(|| pair_sums_2d(&plane, black_box(n / 2)))
        });
    }
    g.finish();
}

fn sde_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("sde_step");
    for n in SIZES {
        let p = GameParams::new(n, 2.0, 1.0).unwrap();
        let line = quantile_start_1d(&p).unwrap();
        let plane = disc_start_2d(&p).unwrap();
        let noise = vec![0.0; 2 * n];
        let key = BridgeKey {
            gap_contraction: None,
            ..BridgeKey::default()
        };
        g.bench_with_input(BenchmarkId::new("line", n), &n, |b, _| {
            b.iter(|| step_dyson_1d(&line, &p, black_box(1e-6), &noise[..n], key).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("plane", n), &n, |b, _| {
            b.iter(|| step_coulomb_2d(&plane, &p, black_box(1e-6), &noise, key).unwrap())
        });
    }
    g.finish();
}

fn mala(c: &mut Criterion) {
    let mut g = c.benchmark_group("mala_100_steps");
    g.sample_size(20);
    for n in [50, 200] {
        let p = GameParams::new(n, 2.0, 1.0).unwrap();
        let chain = ChainConfig::new(default_step_size(&p), 0, 100, 1, 3);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| mala_chain_1d(&p, &chain).unwrap())
        });
    }
    g.finish();
}

fn circumcircles(c: &mut Criterion) {
    let mut g = c.benchmark_group("circumcircle_sum");
    for n in [25, 100, 400] {
        let p = GameParams::new(n, 2.0, 1.0).unwrap();
        let plane = disc_start_2d(&p).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| circumcircle_sum(plane.points(), black_box(n / 3)))
        });
    }
    g.finish();
}

criterion_group!(benches, pair_sums, sde_step, mala, circumcircles);
criterion_main!(benches);
