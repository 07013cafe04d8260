//! Fixtures shared by the kernel benchmarks.

use smo_core::dynamics::{RobotModel, SimState};
use smo_core::harness::{resolve_gains, ExperimentConfig, GainSource};
use smo_core::{JointVector, ObserverGains};

pub fn reference_gains(n: usize) -> ObserverGains {
    let mut cfg = ExperimentConfig::default();
    cfg.synthesis.source = GainSource::Reference;
    if n != 2 {
        cfg.plant.kind = smo_core::harness::PlantKind::Synthetic;
        cfg.plant.dof = n;
    }
    resolve_gains(&cfg, None).expect("reference gains")
}

pub fn moving_state(model: &RobotModel) -> SimState {
    let n = model.dof();
    SimState {
        t: 0.0,
        q: JointVector::from_fn(n, |i, _| 0.3 + 0.1 * i as f64),
        qd: JointVector::from_fn(n, |i, _| 0.5 - 0.2 * i as f64),
    }
}

/// Short desk run used to time the whole closed loop.
pub fn short_run_config(duration: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.synthesis.source = GainSource::Reference;
    cfg.disturbance.start = 0.2;
    cfg.disturbance.end = duration;
    cfg.run.duration = duration;
    cfg.metrics.transient_end = 0.0;
    cfg.sensor.noise_std = 1e-4;
    cfg
}
