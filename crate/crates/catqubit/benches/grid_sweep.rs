use catqubit::circuit::{sweep, ModeOverrides, RingParams};
use catqubit::fock::cat_state;
use catqubit::wigner::{axis, wigner_numeric};
use catqubit::{Exec, ModeSpace, C64};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn wigner_grid(c: &mut Criterion) {
    let st = cat_state(ModeSpace::new(40).unwrap(), C64::new(2.5, 0.0), 0.0).unwrap();
    let ax = axis(5.5, 81);
    let mut g = c.benchmark_group("wigner_81x81_dim40");
    for exec in [Exec::Sequential, Exec::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| wigner_numeric(black_box(&st), &ax, &ax, exec).unwrap())
        });
    }
    g.finish();
}

fn flux_sweep(c: &mut Criterion) {
    let ring = RingParams::new(250.0, 115.0, 0.2, 0.0).unwrap();
    let fluxes: Vec<f64> = (0..2001).map(|k| 0.45 * k as f64 / 2000.0).collect();
    let mut g = c.benchmark_group("circuit_sweep_2001");
    for exec in [Exec::Sequential, Exec::Parallel] {
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| sweep(black_box(&ring), &fluxes, &ModeOverrides::default(), exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, wigner_grid, flux_sweep);
criterion_main!(benches);
