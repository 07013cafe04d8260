//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//! Each criterion also enforces its runtime budget.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use smo_core::dynamics::DisturbanceKind;
use smo_core::harness::metrics::reaching_index;
use smo_core::harness::{
    compute_metrics, export_record, resolve_gains, run_with_gains, BoundaryLayer, ExperimentConfig,
    GainSource, ObserverInit,
};
use smo_core::synthesis::{
    default_omega_grid, derive_smo_gains, schur_checks, solve_lmi, verify_eigenvalues, verify_hinf,
    LyapunovBlocks, ObserverGains, SolverOptions, SynthesisOutcome, SynthesisSpec,
};

const REFERENCE_L: (f64, f64) = (156.7, 2678.0);

type Criterion<'a> = (&'static str, Duration, Box<dyn Fn() -> Outcome + 'a>);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn reference_spec() -> SynthesisSpec {
    SynthesisSpec {
        n: 2,
        kappa: 10.0,
        gamma: 0.1,
        rho0: 250.0,
        delta_s: 0.05,
    }
}

fn criterion_1() -> Outcome {
    let g = derive_smo_gains(
        &LyapunovBlocks::reference(),
        REFERENCE_L.0,
        REFERENCE_L.1,
        &reference_spec(),
    )
    .unwrap();
    let (h, k0) = (g.h_scalar(), g.k0_scalar());
    let diagonal = (&g.h - DMatrix::identity(2, 2) * h).amax() == 0.0
        && (&g.k0 - DMatrix::identity(2, 2) * k0).amax() == 0.0;
    outcome(
        diagonal && (h - 0.2103).abs() <= 1e-3 && (k0 - 0.0585).abs() <= 1e-3,
        format!("H = {h:.4} I, K0 = {k0:.4} I"),
    )
}

fn criterion_2() -> Outcome {
    let report = verify_eigenvalues(REFERENCE_L.0, REFERENCE_L.1, 10.0);
    let mut re: Vec<f64> = report.eigenvalues.iter().map(|z| z.re).collect();
    re.sort_by(f64::total_cmp);
    let real = report.eigenvalues.iter().all(|z| z.im == 0.0);
    let close = (re[0] + 137.2).abs() <= 0.1 && (re[1] + 19.5).abs() <= 0.1;
    outcome(
        real && close && re.iter().all(|&x| x < -10.0),
        format!("eigenvalues {:.2}, {:.2}", re[1], re[0]),
    )
}

fn criterion_3() -> Outcome {
    let report = schur_checks(&LyapunovBlocks::reference());
    let strengthened = report.get("strengthened_p12").map_or(f64::NAN, |c| c.value);
    outcome(
        report.all_passed() && report.checks.len() == 5 && (strengthened - 1.454).abs() < 1e-9,
        format!(
            "{}/5 checks pass, -P12 - P12^T - I = {strengthened:.3}",
            report.checks.iter().filter(|c| c.passed).count()
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let grid = default_omega_grid();
    let (mut feasible, mut violations) = (0, 0);
    for _ in 0..20 {
        let spec = SynthesisSpec {
            kappa: rng.gen_range(1.0..40.0),
            gamma: 10f64.powf(rng.gen_range(-2.0..0.5)),
            ..reference_spec()
        };
        if let SynthesisOutcome::Feasible(sol) =
            solve_lmi(&spec, &SolverOptions::default()).unwrap()
        {
            feasible += 1;
            let eig = verify_eigenvalues(sol.l1, sol.l2, spec.kappa).passed;
            let hinf = verify_hinf(sol.l1, sol.l2, spec.gamma, &grid).passed;
            violations += usize::from(!(eig && hinf));
        }
    }
    outcome(
        violations == 0 && grid.len() == 200,
        format!("{feasible}/20 feasible, {violations} violations"),
    )
}

fn default_gains() -> ObserverGains {
    resolve_gains(&ExperimentConfig::default(), None).unwrap()
}

/// Monte Carlo over initial estimation errors; returns (runs within the
/// bound, worst entry time over bound).
fn reaching_trials(gains: &ObserverGains, source: GainSource, seed: u64) -> (usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = ExperimentConfig::default();
    cfg.synthesis.source = source;
    cfg.disturbance.kind = DisturbanceKind::Zero;
    cfg.disturbance.start = 0.0;
    cfg.disturbance.end = 0.0;
    cfg.run.duration = 0.2;
    cfg.metrics.transient_end = 0.0;
    cfg.synthesis.rho0 = 250.0;
    cfg.observer.delta_s = BoundaryLayer::Width(0.05);
    cfg.observer.init = ObserverInit::Truth;
    let (mut within, mut worst_ratio) = (0, 0.0f64);
    for _ in 0..100 {
        let dir: DVector<f64> = DVector::from_fn(2, |_, _| rng.sample(StandardNormal));
        let radius: f64 = rng.gen::<f64>().sqrt();
        cfg.observer.initial_error = Some((dir.normalize() * radius).iter().copied().collect());
        let rec = run_with_gains(&cfg, gains).unwrap();
        let bound = rec.s[0].norm() / (rec.gains.spec.rho0 * rec.gains.derived.p_k);
        if let Some(i) = reaching_index(&rec.s_norm, rec.delta_s, 1) {
            if rec.t[i] <= bound {
                within += 1;
            }
            if bound > 0.0 {
                worst_ratio = worst_ratio.max(rec.t[i] / bound);
            }
        }
    }
    (within, worst_ratio)
}

fn criterion_5(synthesized: &ObserverGains) -> Outcome {
    let mut reference_cfg = ExperimentConfig::default();
    reference_cfg.synthesis.source = GainSource::Reference;
    let reference = resolve_gains(&reference_cfg, None).unwrap();
    let (a, ra) = reaching_trials(&reference, GainSource::Reference, 5);
    let (b, rb) = reaching_trials(synthesized, GainSource::Synthesize, 55);
    outcome(
        a == 100 && b == 100,
        format!(
            "reference gains {a}/100 (worst entry/bound {ra:.3}), synthesized gains {b}/100 (worst {rb:.3})"
        ),
    )
}

fn criterion_6(gains: &ObserverGains) -> Outcome {
    let mut cfg = ExperimentConfig::default();
    cfg.disturbance.kind = DisturbanceKind::Square;
    cfg.disturbance.start = 1.0;
    cfg.disturbance.end = 4.0;
    cfg.run.duration = 4.0;
    cfg.metrics.transient_end = 0.0;
    let rec = run_with_gains(&cfg, gains).unwrap();
    let k0 = rec.gains.derived.k0;
    let m = compute_metrics(&rec, rec.delta_s).unwrap();
    let reached = m.reaching_time < cfg.disturbance.start;
    let mut filt = DVector::zeros(rec.n);
    let mut worst = 0.0f64;
    for k in 1..rec.len() {
        let dt = rec.t[k] - rec.t[k - 1];
        filt += (&rec.tau_d[k - 1] - &filt) * (1.0 - (-dt / k0).exp());
        if rec.t[k] >= cfg.disturbance.start + 3.0 * k0 {
            worst = worst.max((&rec.d_hat[k] - &filt).norm());
        }
    }
    let d0 = cfg.disturbance.amplitude(rec.n).norm();
    let limit = (2.0 * rec.delta_s).max(0.02 * d0);
    outcome(
        rec.completed() && reached && worst <= limit,
        format!("max ||d^ - filter(d0)|| = {worst:.4}, limit {limit:.4}"),
    )
}

fn desk_config(kind: DisturbanceKind, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.disturbance.kind = kind;
    cfg.identification.random_spread = Some(0.02);
    cfg.sensor.noise_std = 1e-4;
    cfg.run.seed = seed;
    cfg
}

fn criterion_7(gains: &ObserverGains, kind: DisturbanceKind, seed: u64) -> Outcome {
    let rec = run_with_gains(&desk_config(kind, seed), gains).unwrap();
    let m = compute_metrics(&rec, rec.delta_s).unwrap();
    outcome(
        rec.completed() && m.rmse_relative.iter().all(|&r| r <= 0.05),
        format!("relative RMSE per joint {:.4?}", m.rmse_relative),
    )
}

fn criterion_8(gains: &ObserverGains) -> Outcome {
    let rec = run_with_gains(&desk_config(DisturbanceKind::Square, 8), gains).unwrap();
    let m = compute_metrics(&rec, rec.delta_s).unwrap();
    let target = 3.0 * rec.gains.derived.k0.abs();
    outcome(
        rec.completed() && m.rise_time.iter().all(|r| (r / target - 1.0).abs() <= 0.3),
        format!("rise times {:.4?} s vs 3 K0 = {target:.4} s", m.rise_time),
    )
}

fn criterion_9(gains: &ObserverGains) -> Outcome {
    let rec = run_with_gains(&desk_config(DisturbanceKind::Zero, 9), gains).unwrap();
    let m = compute_metrics(&rec, rec.delta_s).unwrap();
    outcome(
        rec.completed() && m.confinement >= 0.99 && m.max_d_hat < m.noise_floor,
        format!(
            "confinement {:.2}%, max ||d^|| = {:.3} below floor {:.3}",
            100.0 * m.confinement,
            m.max_d_hat,
            m.noise_floor
        ),
    )
}

fn criterion_10(gains: &ObserverGains) -> Outcome {
    let cfg = desk_config(DisturbanceKind::Sinusoid, 10);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let files: Vec<_> = dirs
        .iter()
        .map(|d| export_record(&run_with_gains(&cfg, gains).unwrap(), d.path()).unwrap())
        .collect();
    let mut identical = files[0].len() == files[1].len();
    for (a, b) in files[0].iter().zip(&files[1]) {
        identical &= std::fs::read(a).unwrap() == std::fs::read(b).unwrap();
    }
    outcome(identical, format!("{} files compared", files[0].len()))
}

fn main() {
    let gains = default_gains();
    let ms = Duration::from_millis;
    let criteria: Vec<Criterion> = vec![
        ("1 gain-formula reproduction", ms(1), Box::new(criterion_1)),
        ("2 eigenvalue placement", ms(1), Box::new(criterion_2)),
        (
            "3 Schur and strengthened P12 chain",
            ms(1),
            Box::new(criterion_3),
        ),
        (
            "4 feasibility implies eigenvalue and H-inf bounds",
            ms(5_000),
            Box::new(criterion_4),
        ),
        (
            "5 reaching-time bound",
            ms(120_000),
            Box::new(|| criterion_5(&gains)),
        ),
        (
            "6 filter equivalence",
            ms(30_000),
            Box::new(|| criterion_6(&gains)),
        ),
        (
            "7a sinusoid tracking",
            ms(60_000),
            Box::new(|| criterion_7(&gains, DisturbanceKind::Sinusoid, 71)),
        ),
        (
            "7b triangle tracking",
            ms(60_000),
            Box::new(|| criterion_7(&gains, DisturbanceKind::Triangle, 72)),
        ),
        (
            "8 square-wave filtering",
            ms(60_000),
            Box::new(|| criterion_8(&gains)),
        ),
        ("9 null run", ms(30_000), Box::new(|| criterion_9(&gains))),
        (
            "10 determinism",
            ms(60_000),
            Box::new(|| criterion_10(&gains)),
        ),
    ];

    let mut failures = 0;
    for (name, budget, run) in &criteria {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let passed = result.passed && elapsed < *budget;
        failures += usize::from(!passed);
        println!(
            "{} criterion {name}: {} [{:.3} ms, budget {} ms]",
            if passed { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64() * 1e3,
            budget.as_millis()
        );
    }
    println!(
        "{}/{} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
