//! Parallel (rayon) vs sequential evaluation of the response-function
//! workloads that dominate inference time.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use welldeconv::laplace::InversionScheme;
use welldeconv::par::{map_slice, map_slice_seq};
use welldeconv::reservoir::{ReservoirParams, Transition};

fn test_params() -> ReservoirParams {
    ReservoirParams::new(
        1.5,
        2.0,
        5.0,
        vec![
            Transition { r: 1.5, m: 0.4, eta: -0.3 },
            Transition { r: 2.5, m: -0.6, eta: 0.2 },
        ],
    )
    .expect("valid params")
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

fn bench_phi_grid(c: &mut Criterion) {
    let params = test_params();
    let scheme = InversionScheme::default();
    let mut group = c.benchmark_group("phi_grid");
    for n in [64usize, 512] {
        let times = log_grid(1e-2, 1e4, n);
        group.bench_with_input(BenchmarkId::new("parallel", n), &times, |b, times| {
            b.iter(|| map_slice(times, |&t| params.cumulative_phi(t, &scheme).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("serial", n), &times, |b, times| {
            b.iter(|| map_slice_seq(times, |&t| params.cumulative_phi(t, &scheme).unwrap()))
        });
    }
    group.finish();
}

fn bench_z_fan(c: &mut Criterion) {
    // The response-curve fan: many (draw, tau) pairs of z evaluations.
    let params = test_params();
    let scheme = InversionScheme::default();
    let taus = log_grid(0.1, 12.0, 100);
    let draws: Vec<ReservoirParams> = (0..24)
        .map(|i| {
            let mut p = params.clone();
            p.p += 0.01 * i as f64;
            p
        })
        .collect();
    let pairs: Vec<(usize, f64)> = draws
        .iter()
        .enumerate()
        .flat_map(|(i, _)| taus.iter().map(move |&tau| (i, tau)))
        .collect();
    let mut group = c.benchmark_group("z_fan");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| {
            map_slice(&pairs, |&(i, tau)| {
                draws[i].z_transform(tau, &scheme).unwrap()
            })
        })
    });
    group.bench_function("serial", |b| {
        b.iter(|| {
            map_slice_seq(&pairs, |&(i, tau)| {
                draws[i].z_transform(tau, &scheme).unwrap()
            })
        })
    });
    group.finish();
}

criterion_group!(benches, bench_phi_grid, bench_z_fan);
criterion_main!(benches);
