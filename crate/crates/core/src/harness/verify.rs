//! Invariant campaign behind `smo verify`. Each check covers one
//! stated property of a module and reports a short measured detail.

use std::fs;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, GainSource, ObserverInit, REFERENCE_L};
use super::export::export_record;
use super::metrics::{compute_metrics, reaching_index};
use super::run::{run_with_gains, RunRecord};
use crate::dynamics::{
    disturbance, step, step_with, DisturbanceKind, DisturbanceProfile, IdentifiedModel, RobotModel,
    SimState,
};
use crate::error::{Result, SmoError};
use crate::linearization::{compute_mdot, compute_u, LinearSystem};
use crate::observer::{
    sliding_lyapunov, IntervalSample, ObserverSettings, ObserverState, SlidingModeObserver,
};
use crate::synthesis::{
    default_omega_grid, derive_smo_gains, schur_checks, solve_lmi, verify_eigenvalues, verify_hinf,
    LyapunovBlocks, ObserverGains, SolverOptions, SynthesisOutcome, SynthesisSpec,
};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub module: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(module: &'static str, name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        module,
        name,
        passed,
        detail,
    }
}

/// Runs every check with gains synthesized for `base`. Runs use short
/// horizons so the campaign finishes in seconds.
pub fn run_campaign(base: &ExperimentConfig, gains: &ObserverGains) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    dynamics_checks(&mut out)?;
    linearization_checks(&mut out)?;
    synthesis_checks(&mut out, base)?;
    observer_checks(&mut out, base, gains)?;
    harness_checks(&mut out, base, gains)?;
    Ok(out)
}

fn dynamics_checks(out: &mut Vec<CheckResult>) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let models = [RobotModel::two_link(), RobotModel::synthetic(7)];
    let (mut asym, mut min_eig) = (0.0f64, f64::INFINITY);
    for model in &models {
        for _ in 0..1000 {
            let m = model.mass_matrix(&model.sample_configuration(&mut rng));
            asym = asym.max((&m - m.transpose()).norm());
            min_eig = min_eig.min(m.symmetric_eigenvalues().min());
        }
    }
    out.push(check(
        "dynamics",
        "inertia_symmetric",
        asym < 1e-12,
        format!("max ||M - M^T|| = {asym:.1e}"),
    ));
    out.push(check(
        "dynamics",
        "inertia_positive_definite",
        min_eig > 0.0,
        format!("min eigenvalue {min_eig:.4}"),
    ));

    let model = RobotModel::two_link().frictionless();
    let mut s = SimState {
        t: 0.0,
        q: DVector::from_vec(vec![0.4, -0.6]),
        qd: DVector::from_vec(vec![0.5, -0.2]),
    };
    let energy = |s: &SimState| model.kinetic_energy(&s.q, &s.qd) + model.potential_energy(&s.q);
    let e0 = energy(&s);
    let z = DVector::zeros(2);
    let mut drift = 0.0f64;
    for _ in 0..100_000 {
        s = step(&model, &s, &z, &z, 1e-4)?;
        drift = drift.max((energy(&s) - e0).abs() / e0.abs());
    }
    out.push(check(
        "dynamics",
        "energy_conserved",
        drift < 1e-6,
        format!("relative drift {drift:.1e} over 10 s"),
    ));

    let profile = DisturbanceProfile {
        kind: DisturbanceKind::Square,
        amplitude: DVector::from_element(2, 3.0),
        start: 1.0,
        end: 2.0,
    };
    let mut outside_zero = true;
    for kind in [
        DisturbanceKind::Sinusoid,
        DisturbanceKind::Square,
        DisturbanceKind::Triangle,
        DisturbanceKind::ContactPulse,
    ] {
        let p = DisturbanceProfile {
            kind,
            ..profile.clone()
        };
        for i in 0..=400 {
            let t = i as f64 * 0.01 - 0.5;
            if !(1.0..=2.0).contains(&t) && disturbance(&p, t).amax() != 0.0 {
                outside_zero = false;
            }
        }
    }
    out.push(check(
        "dynamics",
        "disturbance_support",
        outside_zero,
        "zero outside [start, end]".into(),
    ));

    let id = IdentifiedModel::perfect(RobotModel::two_link());
    let mut same = true;
    for _ in 0..200 {
        let q = id.base.sample_configuration(&mut rng);
        let qd = id.base.sample_configuration(&mut rng);
        same &= id.mass_matrix(&q) == id.base.mass_matrix(&q)
            && id.coriolis(&q, &qd) == id.base.coriolis(&q, &qd)
            && id.gravity(&q) == id.base.gravity(&q)
            && id.friction(&qd) == id.base.friction(&qd);
    }
    out.push(check(
        "dynamics",
        "unit_factors_exact",
        same,
        "identified model equals plant".into(),
    ));
    Ok(())
}

fn linearization_checks(out: &mut Vec<CheckResult>) -> Result<()> {
    let mut ranks = true;
    for n in [1, 2, 7] {
        let sys = LinearSystem::new(n);
        ranks &= sys.observability_rank() == 2 * n
            && sys.controllability_rank() == 2 * n
            && sys.ce().amax() == 0.0;
    }
    out.push(check(
        "linearization",
        "observable_controllable",
        ranks,
        "rank 2n and CE = 0 for n in {1, 2, 7}".into(),
    ));

    // Residual of x' = A x + u + E d along a simulated trajectory with exact
    // measurements; d must equal the injected torque.
    let model = RobotModel::two_link();
    let id = IdentifiedModel::perfect(model.clone());
    let tau_d = |t: f64| DVector::from_vec(vec![1.5 * (2.0 * t).sin(), -0.8]);
    let tau = DVector::from_vec(vec![4.0, 1.0]);
    let h = 1e-4;
    let mut states = vec![SimState {
        t: 0.0,
        q: DVector::from_vec(vec![0.3, 0.2]),
        qd: DVector::from_vec(vec![0.1, -0.4]),
    }];
    for _ in 0..4000 {
        let next = step_with(&model, states.last().expect("nonempty"), &tau, tau_d, h)?;
        states.push(next);
    }
    let x = |s: &SimState| {
        let m = id.mass_matrix(&s.q);
        (&m * &s.q, m * &s.qd)
    };
    let mut worst = 0.0f64;
    let mut xi_ok = true;
    let sigma = model.sigma_m();
    let alpha1 = states.iter().fold(0.0f64, |a, s| a.max(s.qd.norm()));
    for k in 1..states.len() - 1 {
        let (zp, xp) = x(&states[k + 1]);
        let (zm, xm) = x(&states[k - 1]);
        let (z, xi) = x(&states[k]);
        let s = &states[k];
        let mdot = compute_mdot(
            &id.mass_matrix(&states[k + 1].q),
            &id.mass_matrix(&states[k - 1].q),
            2.0 * h,
        )?;
        let u = compute_u(&id, &s.q, &s.qd, &tau, &mdot)?;
        let upper = (zp - zm) / (2.0 * h) - &xi - &u.upper;
        let lower = (xp - xm) / (2.0 * h) - &u.lower - tau_d(s.t);
        worst = worst.max(upper.amax()).max(lower.amax());
        xi_ok &= xi.norm() <= sigma * alpha1 + 1e-12;
        let _ = z;
    }
    out.push(check(
        "linearization",
        "model_residual",
        worst < 1e-5,
        format!("max |x' - A x - u - E tau_d| = {worst:.1e}"),
    ));
    out.push(check(
        "linearization",
        "momentum_bounded",
        xi_ok,
        format!("||xi|| <= sigma_M alpha1 = {:.3}", sigma * alpha1),
    ));
    Ok(())
}

fn synthesis_checks(out: &mut Vec<CheckResult>, base: &ExperimentConfig) -> Result<()> {
    let spec = SynthesisSpec {
        n: 2,
        kappa: 1.0,
        gamma: 1.0,
        rho0: base.synthesis.rho0,
        delta_s: 0.05,
    };
    let reference = derive_smo_gains(
        &LyapunovBlocks::reference(),
        REFERENCE_L.0,
        REFERENCE_L.1,
        &spec,
    )?;
    let (h, k0) = (reference.h_scalar(), reference.k0_scalar());
    out.push(check(
        "synthesis",
        "reference_gains",
        (h - 0.2103).abs() < 1e-3 && (k0 - 0.0585).abs() < 1e-3,
        format!("H = {h:.4} (0.2103), K0 = {k0:.4} (0.0585)"),
    ));
    let schur = schur_checks(&LyapunovBlocks::reference());
    out.push(check(
        "synthesis",
        "reference_schur_chain",
        schur.all_passed(),
        format!("{} checks", schur.checks.len()),
    ));

    let grid = default_omega_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut feasible, mut bounds_hold, mut chain, mut round_trip, mut pk) =
        (0, true, true, true, true);
    for _ in 0..8 {
        let spec = SynthesisSpec {
            n: 2,
            kappa: rng.gen_range(1.0..20.0),
            gamma: 10f64.powf(rng.gen_range(-1.3..0.5)),
            rho0: base.synthesis.rho0,
            delta_s: 0.05,
        };
        if let SynthesisOutcome::Feasible(sol) = solve_lmi(&spec, &SolverOptions::default())? {
            feasible += 1;
            bounds_hold &= verify_eigenvalues(sol.l1, sol.l2, spec.kappa).passed
                && verify_hinf(sol.l1, sol.l2, spec.gamma, &grid).passed;
            chain &= schur_checks(&sol.blocks).all_passed();
            let g = derive_smo_gains(&sol.blocks, sol.l1, sol.l2, &spec)?;
            let ktp = g.kt_p();
            let mut hz = DMatrix::zeros(2, 4);
            hz.view_mut((0, 0), (2, 2)).copy_from(&g.h);
            round_trip &= (ktp - hz).amax() <= 1e-12 * g.h.amax().max(1.0);
            pk &= g.p_k.clone().cholesky().is_some();
        }
    }
    out.push(check(
        "synthesis",
        "feasible_implies_eig_and_hinf",
        bounds_hold && feasible > 0,
        format!("{feasible}/8 random specs feasible"),
    ));
    out.push(check(
        "synthesis",
        "schur_chain",
        chain,
        "all five Schur checks on every solution".into(),
    ));
    out.push(check(
        "synthesis",
        "kt_p_equals_h_zero",
        round_trip,
        "K^T P = [H 0] to 1e-12".into(),
    ));
    out.push(check(
        "synthesis",
        "p_k_positive_definite",
        pk,
        "Cholesky of P_K succeeds".into(),
    ));
    Ok(())
}

fn short_config(base: &ExperimentConfig, kind: DisturbanceKind, duration: f64) -> ExperimentConfig {
    let mut cfg = base.clone();
    cfg.disturbance.kind = kind;
    cfg.disturbance.start = 0.5f64.min(duration);
    cfg.disturbance.end = duration;
    cfg.run.duration = duration;
    cfg.metrics.transient_end = 0.0;
    cfg
}

fn observer_checks(
    out: &mut Vec<CheckResult>,
    base: &ExperimentConfig,
    gains: &ObserverGains,
) -> Result<()> {
    let cfg = short_config(base, DisturbanceKind::Sinusoid, 3.0);
    let rec = run_with_gains(&cfg, gains)?;
    let m = compute_metrics(&rec, rec.delta_s)?;
    out.push(check(
        "observer",
        "sliding_confinement",
        rec.completed() && m.confinement >= 0.99,
        format!(
            "{:.2}% of post-reach samples inside the layer",
            100.0 * m.confinement
        ),
    ));

    let mut step_cfg = short_config(base, DisturbanceKind::Square, 1.5);
    step_cfg.sensor.noise_std = 0.0;
    step_cfg.identification.factors = Default::default();
    step_cfg.identification.random_spread = None;
    let rec = run_with_gains(&step_cfg, gains)?;
    let k0 = rec.gains.derived.k0;
    let start = step_cfg.disturbance.start;
    let mut worst = 0.0f64;
    let mut filt = DVector::zeros(rec.n);
    for k in 1..rec.len() {
        let dt = rec.t[k] - rec.t[k - 1];
        let target = &rec.tau_d[k];
        filt += (target - &filt) * (1.0 - (-dt / k0).exp());
        if rec.t[k] >= start + 3.0 * k0 {
            worst = worst.max((&rec.d_hat[k] - &filt).norm());
        }
    }
    let d0 = step_cfg.disturbance.amplitude(rec.n).norm();
    let limit = (2.0 * rec.delta_s).max(0.02 * d0);
    out.push(check(
        "observer",
        "filter_equivalence",
        worst <= limit,
        format!("max ||d^ - filter(d)|| = {worst:.3} (limit {limit:.3})"),
    ));

    // Measured velocity reaches the observer only through u: one explicit
    // step from the same state differs by exactly dt times the input change.
    let id = IdentifiedModel::perfect(RobotModel::two_link());
    let q = DVector::from_vec(vec![0.2, 0.5]);
    let zeta = id.mass_matrix(&q) * &q;
    let state = ObserverState::from_estimate(&zeta * 0.5, DVector::from_vec(vec![0.1, -0.1]));
    let g2 = derive_smo_gains(
        &gains.blocks,
        gains.l1,
        gains.l2,
        &SynthesisSpec { n: 2, ..gains.spec },
    )?;
    let single = ObserverSettings {
        substeps: 1,
        ..Default::default()
    };
    let mdot = DMatrix::from_element(2, 2, 0.05);
    let tau = DVector::from_vec(vec![1.0, 2.0]);
    let u_a = compute_u(&id, &q, &DVector::from_vec(vec![0.3, 0.1]), &tau, &mdot)?;
    let u_b = compute_u(&id, &q, &DVector::from_vec(vec![-5.0, 9.0]), &tau, &mdot)?;
    let dt = 1e-3;
    let mut obs_a = SlidingModeObserver::new(g2.clone(), single, state.clone())?;
    let mut obs_b = SlidingModeObserver::new(g2.clone(), single, state)?;
    obs_a.step(&zeta, &u_a, dt)?;
    obs_b.step(&zeta, &u_b, dt)?;
    let dz = &obs_b.state().zeta_hat - &obs_a.state().zeta_hat - (&u_b.upper - &u_a.upper) * dt;
    let dx = &obs_b.state().xi_hat - &obs_a.state().xi_hat - (&u_b.lower - &u_a.lower) * dt;
    let gap = dz.amax().max(dx.amax());
    out.push(check(
        "observer",
        "no_velocity_feedback",
        gap < 1e-12,
        format!("state change beyond dt * delta u = {gap:.1e}"),
    ));

    let sign_settings = ObserverSettings {
        delta_s: 0.0,
        substeps: 1,
        ..Default::default()
    };
    let mut obs = SlidingModeObserver::new(
        g2.clone(),
        sign_settings,
        ObserverState::from_estimate(DVector::from_vec(vec![-0.6, 0.8]), DVector::zeros(2)),
    )?;
    let p_k_inv = g2
        .p_k
        .clone()
        .try_inverse()
        .expect("P_K is positive definite");
    let band = 2.0 * 1.5 * g2.spec.rho0 * (g2.h_scalar() * g2.k0_scalar()).abs() * 1e-3;
    let zero = DVector::zeros(2);
    let u0 = crate::linearization::AuxiliaryInput::zeros(2);
    let mut prev = obs.diagnose(&zero);
    let mut monotone = true;
    for _ in 0..300 {
        let d = obs.step_interval(
            IntervalSample {
                zeta_start: &zero,
                zeta_end: &zero,
                u_start: &u0,
                u_end: &u0,
            },
            1e-3,
        )?;
        if prev.s_norm > band {
            monotone &= sliding_lyapunov(&d.s, &p_k_inv) <= sliding_lyapunov(&prev.s, &p_k_inv);
        }
        prev = d;
    }
    out.push(check(
        "observer",
        "lyapunov_nonincreasing",
        monotone,
        format!("sign mode, chattering band {band:.2e}"),
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut within = 0;
    let trials = 10;
    for _ in 0..trials {
        let mut cfg = short_config(base, DisturbanceKind::Zero, 0.2);
        cfg.observer.init = ObserverInit::Truth;
        let e: Vec<f64> = (0..cfg.dof()).map(|_| rng.gen_range(-0.7..0.7)).collect();
        cfg.observer.initial_error = Some(e);
        let rec = run_with_gains(&cfg, gains)?;
        let bound = rec.s[0].norm() / (rec.gains.spec.rho0 * rec.gains.derived.p_k);
        if let Some(i) = reaching_index(&rec.s_norm, rec.delta_s, 1) {
            within += usize::from(rec.t[i] <= bound);
        }
    }
    out.push(check(
        "observer",
        "reaching_time_bound",
        within == trials,
        format!("{within}/{trials} runs reach the layer within the bound"),
    ));
    Ok(())
}

fn records_equal_bytes(a: &RunRecord, b: &RunRecord) -> Result<bool> {
    let tmp = |e: std::io::Error| SmoError::io(std::env::temp_dir(), e);
    let (da, db) = (
        tempfile::tempdir().map_err(tmp)?,
        tempfile::tempdir().map_err(tmp)?,
    );
    let fa = export_record(a, da.path())?;
    let fb = export_record(b, db.path())?;
    let mut same = fa.len() == fb.len();
    for (x, y) in fa.iter().zip(&fb) {
        same &= fs::read(x).map_err(|e| SmoError::io(x, e))?
            == fs::read(y).map_err(|e| SmoError::io(y, e))?;
    }
    Ok(same)
}

fn harness_checks(
    out: &mut Vec<CheckResult>,
    base: &ExperimentConfig,
    gains: &ObserverGains,
) -> Result<()> {
    let mut cfg = short_config(base, DisturbanceKind::Triangle, 1.0);
    cfg.sensor.noise_std = 1e-4;
    cfg.identification.random_spread = Some(0.02);
    let a = run_with_gains(&cfg, gains)?;
    let b = run_with_gains(&cfg, gains)?;
    out.push(check(
        "harness",
        "deterministic_export",
        records_equal_bytes(&a, &b)?,
        "byte-identical CSVs".into(),
    ));
    out.push(check(
        "harness",
        "series_equal_length",
        a.is_consistent(),
        format!("{} samples", a.len()),
    ));
    let text = cfg.to_toml();
    let back = ExperimentConfig::from_toml(&text).ok();
    out.push(check(
        "harness",
        "config_round_trip",
        back.as_ref() == Some(&cfg),
        "TOML round trip".into(),
    ));
    let mut reference = cfg.clone();
    reference.synthesis.source = GainSource::Reference;
    out.push(check(
        "harness",
        "config_valid",
        reference.validate().is_ok(),
        "reference-gain config validates".into(),
    ));
    Ok(())
}
