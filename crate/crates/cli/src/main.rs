use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use smo_core::harness::{
    compute_metrics, export_record, resolve_gains, run_campaign, run_with_gains, ExperimentConfig,
    RunStatus,
};
use smo_core::synthesis::{
    feasibility_sweep, schur_checks, solve_lmi, write_gain_file, SolverOptions, SynthesisOutcome,
    SynthesisSpec,
};
use smo_core::SmoError;

const EXIT_INVALID: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_CHECKS_FAILED: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "smo",
    version,
    about = "Sliding-mode torque observer: synthesis, simulation and verification"
)]
struct Cli {
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path: gain file for `synth`, directory for `run`, CSV for `sweep`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the observer LMI and write a gain file.
    Synth {
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Run one closed-loop experiment and export its record and metrics.
    Run,
    /// Run the invariant campaign and print a pass/fail table.
    Verify,
    /// Feasibility over a (kappa, gamma) grid.
    Sweep {
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 5.0, 10.0, 20.0, 50.0])]
        kappa: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.02, 0.05, 0.1, 0.5, 1.0])]
        gamma: Vec<f64>,
    },
}

enum Failure {
    Core(SmoError),
    Exit(u8),
}

impl From<SmoError> for Failure {
    fn from(e: SmoError) -> Self {
        Failure::Core(e)
    }
}

fn exit_code(e: &SmoError) -> u8 {
    match e {
        SmoError::Infeasible { .. } | SmoError::Synthesis(_) => EXIT_INFEASIBLE,
        SmoError::ObserverDivergence { .. } | SmoError::PlantDivergence { .. } => EXIT_DIVERGED,
        SmoError::Domain(_)
        | SmoError::InvalidConfig(_)
        | SmoError::Io { .. }
        | SmoError::Parse { .. } => EXIT_INVALID,
    }
}

fn load_config(cli: &Cli) -> Result<(ExperimentConfig, Option<PathBuf>), SmoError> {
    let (mut cfg, base) = match &cli.config {
        Some(path) => (
            ExperimentConfig::load(path)?,
            path.parent().map(Path::to_path_buf),
        ),
        None => (ExperimentConfig::default(), None),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    cfg.validate()?;
    Ok((cfg, base))
}

fn spec_for(cfg: &ExperimentConfig) -> SynthesisSpec {
    SynthesisSpec {
        n: cfg.dof(),
        kappa: cfg.synthesis.kappa,
        gamma: cfg.synthesis.gamma,
        rho0: cfg.synthesis.rho0,
        delta_s: 0.0,
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), SmoError> {
    fs::write(path, text).map_err(|source| SmoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn synth(cli: &Cli, kappa: Option<f64>, gamma: Option<f64>) -> Result<(), Failure> {
    let (mut cfg, _) = load_config(cli)?;
    cfg.synthesis.kappa = kappa.unwrap_or(cfg.synthesis.kappa);
    cfg.synthesis.gamma = gamma.unwrap_or(cfg.synthesis.gamma);
    let spec = spec_for(&cfg);
    let sol = match solve_lmi(&spec, &SolverOptions::default())? {
        SynthesisOutcome::Feasible(sol) => sol,
        SynthesisOutcome::Infeasible {
            kappa,
            gamma,
            best_max_eig,
            ..
        } => {
            return Err(SmoError::Infeasible {
                kappa,
                gamma,
                best_max_eig,
            }
            .into())
        }
    };
    let mut gains = smo_core::synthesis::derive_smo_gains(&sol.blocks, sol.l1, sol.l2, &spec)?;
    gains.spec.delta_s = smo_core::harness::resolve_delta_s(&cfg, &gains);
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("gains.toml"));
    write_gain_file(&out, &gains)?;

    println!("kappa = {}, gamma = {}", spec.kappa, spec.gamma);
    println!(
        "P blocks = ({:.6}, {:.6}, {:.6}), L = ({:.4}, {:.4})",
        sol.blocks.p11, sol.blocks.p12, sol.blocks.p22, sol.l1, sol.l2
    );
    println!(
        "H = {:.6}, K0 = {:.6}, LMI max eigenvalue {:.3e}",
        gains.h_scalar(),
        gains.k0_scalar(),
        sol.max_eig
    );
    for c in schur_checks(&sol.blocks).checks {
        println!(
            "  {:<28} {:>12.6} {}",
            c.name,
            c.value,
            if c.passed { "pass" } else { "FAIL" }
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let (cfg, base) = load_config(cli)?;
    let gains = resolve_gains(&cfg, base.as_deref())?;
    let record = run_with_gains(&cfg, &gains)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("run"));
    export_record(&record, &out)?;

    let metrics = compute_metrics(&record, record.delta_s)?;
    let metrics_path = out.join("metrics.toml");
    write_text(&metrics_path, &metrics.to_toml())?;

    println!(
        "samples {}, delta_s {:.4e}, K0 {:.5}",
        record.len(),
        record.delta_s,
        gains.k0_scalar()
    );
    println!(
        "window [{:.3}, {:.3}] s",
        metrics.window.0, metrics.window.1
    );
    println!("rmse           {:.4?}", metrics.rmse);
    println!("rmse relative  {:.4?}", metrics.rmse_relative);
    println!("baseline rmse  {:.4?}", metrics.baseline_rmse);
    println!("rise time      {:.4?}", metrics.rise_time);
    println!(
        "reaching time {:.4} s (bound {:.4} s), confinement {:.2}%",
        metrics.reaching_time,
        metrics.reaching_bound,
        100.0 * metrics.confinement
    );
    println!(
        "max |d^| {:.4}, noise floor {:.4}",
        metrics.max_d_hat, metrics.noise_floor
    );
    println!("wrote {}", out.display());

    match &record.status {
        RunStatus::Completed => Ok(()),
        RunStatus::Aborted { step, reason } => {
            eprintln!("run aborted at step {step}: {reason}");
            Err(Failure::Exit(EXIT_DIVERGED))
        }
    }
}

fn verify(cli: &Cli) -> Result<(), Failure> {
    let (cfg, base) = load_config(cli)?;
    let gains = resolve_gains(&cfg, base.as_deref())?;
    let results = run_campaign(&cfg, &gains)?;
    let failed = results.iter().filter(|r| !r.passed).count();
    for r in &results {
        println!(
            "{:<4} {:<14} {:<34} {}",
            if r.passed { "ok" } else { "FAIL" },
            r.module,
            r.name,
            r.detail
        );
    }
    println!("{}/{} checks passed", results.len() - failed, results.len());
    if failed > 0 {
        return Err(Failure::Exit(EXIT_CHECKS_FAILED));
    }
    Ok(())
}

fn sweep(cli: &Cli, kappas: &[f64], gammas: &[f64]) -> Result<(), Failure> {
    let (cfg, _) = load_config(cli)?;
    let points = feasibility_sweep(&spec_for(&cfg), kappas, gammas, &SolverOptions::default())?;
    println!(
        "{:>8} {:>8} {:>9} {:>12} {:>10} {:>12} {:>9} {:>9}",
        "kappa", "gamma", "feasible", "max_eig", "l1", "l2", "h", "k0"
    );
    for p in &points {
        println!(
            "{:>8} {:>8} {:>9} {:>12.3e} {:>10.3} {:>12.3} {:>9.4} {:>9.5}",
            p.kappa, p.gamma, p.feasible, p.max_eig, p.l1, p.l2, p.h, p.k0
        );
    }
    if let Some(out) = &cli.out {
        let io = |e: csv::Error| SmoError::Parse {
            path: out.clone(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(out).map_err(io)?;
        w.write_record([
            "kappa", "gamma", "feasible", "max_eig", "l1", "l2", "h", "k0",
        ])
        .map_err(io)?;
        for p in &points {
            w.write_record([
                format!("{:?}", p.kappa),
                format!("{:?}", p.gamma),
                p.feasible.to_string(),
                format!("{:?}", p.max_eig),
                format!("{:?}", p.l1),
                format!("{:?}", p.l2),
                format!("{:?}", p.h),
                format!("{:?}", p.k0),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|source| SmoError::Io {
            path: out.clone(),
            source,
        })?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INVALID)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Synth { kappa, gamma } => synth(&cli, *kappa, *gamma),
        Command::Run => run(&cli),
        Command::Verify => verify(&cli),
        Command::Sweep { kappa, gamma } => sweep(&cli, kappa, gamma),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Exit(code)) => ExitCode::from(code),
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
