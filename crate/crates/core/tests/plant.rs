use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use smo_core::dynamics::{step, step_with, IdentifiedModel, Pendulum, RobotModel, SimState};
use smo_core::linearization::{compute_mdot, compute_u};

fn pendulum() -> RobotModel {
    RobotModel::pendulum(Pendulum {
        mass: 1.2,
        length: 0.8,
        gravity: 9.81,
        damping: 0.0,
    })
}

fn integrate(model: &RobotModel, s0: &SimState, dt: f64, horizon: f64) -> SimState {
    let steps = (horizon / dt).round() as usize;
    let z = DVector::zeros(model.dof());
    (0..steps).fold(s0.clone(), |s, _| step(model, &s, &z, &z, dt).unwrap())
}

#[test]
fn double_integrator_is_exact() {
    let model = RobotModel::pendulum(Pendulum::unit_inertia());
    let tau = DVector::from_element(1, 0.7);
    let mut s = SimState {
        t: 0.0,
        q: DVector::from_element(1, 0.2),
        qd: DVector::from_element(1, -0.3),
    };
    for _ in 0..1000 {
        s = step(&model, &s, &tau, &DVector::zeros(1), 1e-2).unwrap();
    }
    let t = s.t;
    assert!((s.q[0] - (0.2 - 0.3 * t + 0.35 * t * t)).abs() < 1e-10);
    assert!((s.qd[0] - (-0.3 + 0.7 * t)).abs() < 1e-12);
}

#[test]
fn rk4_is_fourth_order_over_ten_seconds() {
    let model = pendulum();
    let s0 = SimState {
        t: 0.0,
        q: DVector::from_element(1, 1.0),
        qd: DVector::from_element(1, 0.5),
    };
    let reference = integrate(&model, &s0, 1e-4, 10.0);
    let err: Vec<f64> = [0.04, 0.02, 0.01]
        .iter()
        .map(|&dt| {
            let s = integrate(&model, &s0, dt, 10.0);
            (s.q[0] - reference.q[0])
                .abs()
                .max((s.qd[0] - reference.qd[0]).abs())
        })
        .collect();
    for w in err.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 16.0).abs() < 2.0, "ratio {ratio}, errors {err:?}");
    }
}

#[test]
fn small_angle_period_matches_linear_oscillator() {
    let p = Pendulum {
        mass: 1.0,
        length: 0.5,
        gravity: 9.81,
        damping: 0.0,
    };
    let period = 2.0 * PI * (p.length / p.gravity).sqrt();
    let model = RobotModel::pendulum(p);
    let dt = 1e-4;
    let mut s = SimState {
        t: 0.0,
        q: DVector::from_element(1, 1e-3),
        qd: DVector::zeros(1),
    };
    let z = DVector::zeros(1);
    let mut crossings = Vec::new();
    while crossings.len() < 3 {
        let next = step(&model, &s, &z, &z, dt).unwrap();
        if s.qd[0] < 0.0 && next.qd[0] >= 0.0 || s.qd[0] > 0.0 && next.qd[0] <= 0.0 {
            let frac = s.qd[0] / (s.qd[0] - next.qd[0]);
            crossings.push(s.t + frac * dt);
        }
        s = next;
    }
    let measured = crossings[2] - crossings[0];
    assert!(
        (measured / period - 1.0).abs() < 1e-5,
        "{measured} vs {period}"
    );
}

#[test]
fn momentum_model_residual_equals_constant_disturbance() {
    let model = RobotModel::synthetic(7);
    let id = IdentifiedModel::perfect(model.clone());
    let tau = DVector::from_fn(7, |i, _| 0.5 * i as f64 - 1.0);
    let tau_d = DVector::from_fn(7, |i, _| 0.3 * (i as f64 + 1.0).sin());
    let h = 1e-4;
    let mut states = vec![SimState {
        t: 0.0,
        q: DVector::from_fn(7, |i, _| 0.1 * i as f64),
        qd: DVector::from_fn(7, |i, _| 0.2 - 0.05 * i as f64),
    }];
    for _ in 0..2000 {
        let next = step_with(&model, states.last().unwrap(), &tau, |_| tau_d.clone(), h).unwrap();
        states.push(next);
    }
    let mom = |s: &SimState| id.mass_matrix(&s.q) * &s.qd;
    let pos = |s: &SimState| id.mass_matrix(&s.q) * &s.q;
    let mut worst = 0.0f64;
    for k in (1..states.len() - 1).step_by(50) {
        let (prev, cur, next) = (&states[k - 1], &states[k], &states[k + 1]);
        let mdot: DMatrix<f64> =
            compute_mdot(&id.mass_matrix(&next.q), &id.mass_matrix(&prev.q), 2.0 * h).unwrap();
        let u = compute_u(&id, &cur.q, &cur.qd, &tau, &mdot).unwrap();
        let upper = (pos(next) - pos(prev)) / (2.0 * h) - mom(cur) - &u.upper;
        let lower = (mom(next) - mom(prev)) / (2.0 * h) - &u.lower;
        worst = worst.max(upper.amax()).max((lower - &tau_d).amax());
    }
    assert!(worst < 1e-5, "residual {worst}");
}
