use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;
use smo_bench::{moving_state, reference_gains, short_run_config};
use smo_core::dynamics::{step, RobotModel};
use smo_core::harness::{resolve_gains, run_with_gains};
use smo_core::linearization::AuxiliaryInput;
use smo_core::observer::{IntervalSample, ObserverSettings, ObserverState};
use smo_core::synthesis::{inner_minimize, solve_lmi, SolverOptions, SynthesisSpec};
use smo_core::SlidingModeObserver;

fn observer_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("smo_step");
    for n in [2, 7] {
        let gains = reference_gains(n);
        let mut obs = SlidingModeObserver::new(
            gains,
            ObserverSettings::default(),
            ObserverState::from_estimate(DVector::from_element(n, 0.1), DVector::zeros(n)),
        )
        .unwrap();
        let zeta = DVector::from_element(n, 0.05);
        let u = AuxiliaryInput::zeros(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                obs.step_interval(
                    IntervalSample {
                        zeta_start: &zeta,
                        zeta_end: &zeta,
                        u_start: &u,
                        u_end: &u,
                    },
                    black_box(1e-3),
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn synthesis(c: &mut Criterion) {
    c.bench_function("inner_minimize", |b| {
        b.iter(|| inner_minimize(10.0, 0.1, black_box(37.9), black_box(692.5), None))
    });
    let spec = SynthesisSpec {
        n: 2,
        kappa: 10.0,
        gamma: 0.1,
        rho0: 250.0,
        delta_s: 0.05,
    };
    let mut group = c.benchmark_group("solve_lmi");
    group.sample_size(10);
    group.bench_function("kappa10_gamma0.1", |b| {
        b.iter(|| solve_lmi(black_box(&spec), &SolverOptions::default()).unwrap())
    });
    group.finish();
}

fn plant_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("rk4_step");
    for (name, model) in [
        ("two_link", RobotModel::two_link()),
        ("synthetic7", RobotModel::synthetic(7)),
    ] {
        let s = moving_state(&model);
        let z = DVector::zeros(model.dof());
        group.bench_function(name, |b| {
            b.iter(|| step(&model, black_box(&s), &z, &z, 2.5e-4).unwrap())
        });
    }
    group.finish();
}

fn closed_loop(c: &mut Criterion) {
    let cfg = short_run_config(1.0);
    let gains = resolve_gains(&cfg, None).unwrap();
    let mut group = c.benchmark_group("run");
    group.sample_size(10);
    group.bench_function("two_link_1s", |b| {
        b.iter(|| run_with_gains(black_box(&cfg), &gains).unwrap())
    });
    group.finish();
}

criterion_group!(benches, observer_step, synthesis, plant_step, closed_loop);
criterion_main!(benches);
