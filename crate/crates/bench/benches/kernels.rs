use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use srde_core::noise::{CorrelationKernel, NoiseGrid};
use srde_core::BesselKernel;

fn bessel(c: &mut Criterion) {
    let mut g = c.benchmark_group("bessel");
    for order in [0.8, 3.0] {
        let k = BesselKernel::new(order, 1).unwrap();
        g.bench_function(format!("eval_radius n={order}"), |b| {
            b.iter(|| k.eval_radius(black_box(0.73)).unwrap())
        });
        g.bench_function(format!("eval_cached n={order}"), |b| b.iter(|| k.eval_cached(black_box(0.73))));
    }
    g.finish();
}

fn noise(c: &mut Criterion) {
    let mut g = c.benchmark_group("noise");
    let kernels = [
        ("white d=1", CorrelationKernel::white(1).unwrap(), 256),
        ("riesz d=1", CorrelationKernel::riesz(0.5, 1).unwrap(), 256),
        ("riesz d=2", CorrelationKernel::riesz(0.5, 2).unwrap(), 64),
    ];
    for (name, k, n) in &kernels {
        let grid = NoiseGrid::new(k, *n, 16.0, 1).unwrap();
        let mut out = vec![0.0; grid.len()];
        let mut step = 0;
        g.bench_function(*name, |b| {
            b.iter(|| {
                step += 1;
                grid.sample_increment(1e-3, &mut grid.rng(step), &mut out);
                black_box(out[0])
            })
        });
    }
    g.finish();
}

criterion_group!(benches, bessel, noise);
criterion_main!(benches);
