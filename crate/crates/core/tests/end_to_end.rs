use nalgebra::DVector;
use smo_core::dynamics::DisturbanceKind;
use smo_core::harness::{
    compute_metrics, export_record, import_record, resolve_gains, run_experiment, run_with_gains,
    ExperimentConfig, GainSource, RunStatus,
};
use smo_core::synthesis::write_gain_file;

fn short(kind: DisturbanceKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.disturbance.kind = kind;
    cfg.disturbance.start = 0.5;
    cfg.disturbance.end = 2.0;
    cfg.run.duration = 2.5;
    cfg.metrics.transient_end = 0.0;
    cfg
}

#[test]
fn config_file_to_exported_record() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("experiment.toml");
    std::fs::write(
        &path,
        r#"
[disturbance]
kind = "triangle"
start = 0.5
end = 2.0

[sensor]
noise_std = 1e-4

[synthesis]
source = "reference"

[run]
duration = 2.5
seed = 3

[metrics]
transient_end = 0.0
"#,
    )
    .unwrap();
    let cfg = ExperimentConfig::load(&path).unwrap();
    let rec = run_experiment(&cfg).unwrap();
    assert!(rec.completed());
    assert_eq!(rec.len(), 2501);

    let out = dir.path().join("run");
    export_record(&rec, &out).unwrap();
    let back = import_record(&out).unwrap();
    assert_eq!(back, rec);
    let m = compute_metrics(&back, back.delta_s).unwrap();
    assert!(
        m.rmse_relative.iter().all(|&r| r < 0.1),
        "{:?}",
        m.rmse_relative
    );
}

#[test]
fn unknown_config_key_is_rejected() {
    assert!(ExperimentConfig::from_toml("[run]\nlength = 3.0\n").is_err());
}

#[test]
fn contact_pulse_estimate_follows_filtered_pulse() {
    let cfg = short(DisturbanceKind::ContactPulse);
    let rec = run_experiment(&cfg).unwrap();
    let k0 = rec.gains.derived.k0;
    let mut filt = DVector::zeros(rec.n);
    let mut worst = 0.0f64;
    for k in 1..rec.len() {
        let dt = rec.t[k] - rec.t[k - 1];
        let mid = (&rec.tau_d[k - 1] + &rec.tau_d[k]) * 0.5;
        filt += (mid - &filt) * (1.0 - (-dt / k0).exp());
        worst = worst.max((&rec.d_hat[k] - &filt).norm());
    }
    let peak = cfg.disturbance.amplitude(rec.n).norm();
    assert!(worst < 0.03 * peak, "worst {worst}, peak {peak}");
}

#[test]
fn gain_file_source_reproduces_synthesized_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short(DisturbanceKind::Sinusoid);
    let gains = resolve_gains(&cfg, None).unwrap();
    write_gain_file(&dir.path().join("gains.toml"), &gains).unwrap();

    let mut from_file = cfg.clone();
    from_file.synthesis.source = GainSource::File;
    from_file.synthesis.gains_file = Some("gains.toml".into());
    let loaded = resolve_gains(&from_file, Some(dir.path())).unwrap();
    let a = run_with_gains(&cfg, &gains).unwrap();
    let b = run_with_gains(&from_file, &loaded).unwrap();
    assert_eq!(a.d_hat, b.d_hat);
}

#[test]
fn missing_gain_file_is_an_error() {
    let mut cfg = short(DisturbanceKind::Zero);
    cfg.synthesis.source = GainSource::File;
    cfg.synthesis.gains_file = Some("/nonexistent/gains.toml".into());
    assert!(resolve_gains(&cfg, None).is_err());
}

#[test]
fn unstable_closed_loop_aborts_with_partial_record() {
    let mut cfg = short(DisturbanceKind::Zero);
    cfg.controller.sign = smo_core::dynamics::PdSign::Literal;
    cfg.controller.kp = 5_000.0;
    cfg.run.duration = 20.0;
    let rec = run_experiment(&cfg).unwrap();
    assert!(rec.is_consistent());
    assert!(
        matches!(rec.status, RunStatus::Aborted { .. }),
        "{:?}",
        rec.status
    );
    assert!(rec.len() < cfg.steps() + 1);
}
