use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use cpt_core::controller::run_adaptation;
use cpt_core::lineshape::fit_lorentz;
use cpt_core::physics::{simulate_spectrum, steady_state, AtomParams, FieldPoint};
use cpt_core::plant::{default_linear_map, NoiseConfig, SimPlant, SweepConfig};
use cpt_core::ControllerConfig;

fn bench_steady_state(c: &mut Criterion) {
    let params = AtomParams::default();
    let field = FieldPoint::from_hz(-807.6e3, 0.5765);
    c.bench_function("steady_state_single_point", |b| {
        b.iter(|| steady_state(black_box(&params), black_box(&field)).unwrap())
    });
}

fn bench_sweep(c: &mut Criterion) {
    let params = AtomParams::default();
    let grid: Vec<f64> = (0..201).map(|i| -1007.6e3 + 2e3 * i as f64).collect();
    c.bench_function("simulate_spectrum_201_points", |b| {
        b.iter(|| simulate_spectrum(black_box(&params), black_box(0.5765), black_box(&grid)).unwrap())
    });
}

fn bench_fit(c: &mut Criterion) {
    let params = AtomParams::default();
    let grid: Vec<f64> = (0..201).map(|i| -1007.6e3 + 2e3 * i as f64).collect();
    let spectrum = simulate_spectrum(&params, 0.5765, &grid).unwrap();
    c.bench_function("fit_lorentz_201_points", |b| {
        b.iter(|| fit_lorentz(black_box(&spectrum)).unwrap())
    });
}

fn bench_adaptation(c: &mut Criterion) {
    let fd = -807.6e3;
    let mut cfg = ControllerConfig::new(fd, 8.5);
    cfg.iters = 10;
    cfg.tail_k = 6;
    cfg.tail_m = 10;
    c.bench_function("run_adaptation_10_iters_101_points", |b| {
        b.iter(|| {
            let mut plant = SimPlant::new(
                AtomParams::default(),
                default_linear_map(),
                NoiseConfig::noise_free(1),
                SweepConfig { center_hz: fd, width_hz: 400e3, points: 101 },
            )
            .unwrap();
            run_adaptation(black_box(&cfg), &mut plant).unwrap()
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = bench_steady_state, bench_sweep, bench_fit, bench_adaptation
}
criterion_main!(benches);
