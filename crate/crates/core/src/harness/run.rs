use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{
    BoundaryLayer, ExperimentConfig, GainSource, ObserverInit, RhoModeConfig, REFERENCE_L,
};
use crate::dynamics::{
    disturbance, pd_controller, reference_trajectory, step_with, ErrorFactors, IdentifiedModel,
    JointVector, PositionSensor, RobotModel, SimState,
};
use crate::error::{Result, SmoError};
use crate::linearization::{compute_mdot, compute_u, sup_dm_estimate, uncertainty_budget};
use crate::observer::{
    deadbeat_boundary_layer, IntervalSample, MomentumObserver, ObserverSettings, ObserverState,
    RhoMode, SlidingDiagnostics, SlidingModeObserver,
};
use crate::synthesis::{
    derive_smo_gains, read_gain_file, synthesize, GainFile, LyapunovBlocks, ObserverGains,
    SolverOptions, SynthesisSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Aborted { step: usize, reason: String },
}

/// Identification errors measured on the sampled workspace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentificationSummary {
    pub factors: ErrorFactors,
    pub eps_m: f64,
    pub eps_n: f64,
    pub eps_g: f64,
    pub eps_f: f64,
}

impl IdentificationSummary {
    fn of(id: &IdentifiedModel) -> Self {
        IdentificationSummary {
            factors: id.factors,
            eps_m: id.eps_m,
            eps_n: id.eps_n,
            eps_g: id.eps_g,
            eps_f: id.eps_f,
        }
    }
}

/// Time-indexed trace of one experiment. Row 0 is `t = 0`; row `k` holds
/// the state, measurement and estimate at `t_k = k dt`. `tau` is the command
/// issued at `t_k` and held over the following interval.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub n: usize,
    pub status: RunStatus,
    /// Boundary layer actually used.
    pub delta_s: f64,
    pub gains: GainFile,
    pub identification: IdentificationSummary,
    pub t: Vec<f64>,
    pub q: Vec<JointVector>,
    pub qd: Vec<JointVector>,
    pub q_meas: Vec<JointVector>,
    pub qbd: Vec<JointVector>,
    pub tau: Vec<JointVector>,
    pub tau_d: Vec<JointVector>,
    pub zeta: Vec<JointVector>,
    pub zeta_hat: Vec<JointVector>,
    /// `M^(q) q'` at the true state.
    pub xi: Vec<JointVector>,
    pub xi_hat: Vec<JointVector>,
    pub e_zeta: Vec<JointVector>,
    pub e_xi: Vec<JointVector>,
    pub s: Vec<JointVector>,
    pub v: Vec<JointVector>,
    pub v_eq: Vec<JointVector>,
    pub d_hat: Vec<JointVector>,
    /// Momentum-observer residual; zeros when the baseline is disabled.
    pub r: Vec<JointVector>,
    pub rho: Vec<f64>,
    pub s_norm: Vec<f64>,
}

/// Names of the joint-vector series, in export order.
pub const JOINT_SIGNALS: [&str; 17] = [
    "q", "qd", "q_meas", "qbd", "tau", "tau_d", "zeta", "zeta_hat", "xi", "xi_hat", "e_zeta",
    "e_xi", "s", "v", "v_eq", "d_hat", "r",
];

/// Names of the scalar series, in export order.
pub const SCALAR_SIGNALS: [&str; 2] = ["rho", "s_norm"];

impl RunRecord {
    fn empty(
        config: ExperimentConfig,
        n: usize,
        delta_s: f64,
        gains: &ObserverGains,
        id: &IdentifiedModel,
    ) -> Self {
        let cap = config.steps() + 1;
        RunRecord {
            seed: config.run.seed,
            config,
            n,
            status: RunStatus::Completed,
            delta_s,
            gains: GainFile::from_gains(gains),
            identification: IdentificationSummary::of(id),
            t: Vec::with_capacity(cap),
            q: Vec::with_capacity(cap),
            qd: Vec::with_capacity(cap),
            q_meas: Vec::with_capacity(cap),
            qbd: Vec::with_capacity(cap),
            tau: Vec::with_capacity(cap),
            tau_d: Vec::with_capacity(cap),
            zeta: Vec::with_capacity(cap),
            zeta_hat: Vec::with_capacity(cap),
            xi: Vec::with_capacity(cap),
            xi_hat: Vec::with_capacity(cap),
            e_zeta: Vec::with_capacity(cap),
            e_xi: Vec::with_capacity(cap),
            s: Vec::with_capacity(cap),
            v: Vec::with_capacity(cap),
            v_eq: Vec::with_capacity(cap),
            d_hat: Vec::with_capacity(cap),
            r: Vec::with_capacity(cap),
            rho: Vec::with_capacity(cap),
            s_norm: Vec::with_capacity(cap),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    pub fn joint_signal(&self, name: &str) -> Option<&Vec<JointVector>> {
        Some(match name {
            "q" => &self.q,
            "qd" => &self.qd,
            "q_meas" => &self.q_meas,
            "qbd" => &self.qbd,
            "tau" => &self.tau,
            "tau_d" => &self.tau_d,
            "zeta" => &self.zeta,
            "zeta_hat" => &self.zeta_hat,
            "xi" => &self.xi,
            "xi_hat" => &self.xi_hat,
            "e_zeta" => &self.e_zeta,
            "e_xi" => &self.e_xi,
            "s" => &self.s,
            "v" => &self.v,
            "v_eq" => &self.v_eq,
            "d_hat" => &self.d_hat,
            "r" => &self.r,
            _ => return None,
        })
    }

    pub(crate) fn joint_signal_mut(&mut self, name: &str) -> Option<&mut Vec<JointVector>> {
        Some(match name {
            "q" => &mut self.q,
            "qd" => &mut self.qd,
            "q_meas" => &mut self.q_meas,
            "qbd" => &mut self.qbd,
            "tau" => &mut self.tau,
            "tau_d" => &mut self.tau_d,
            "zeta" => &mut self.zeta,
            "zeta_hat" => &mut self.zeta_hat,
            "xi" => &mut self.xi,
            "xi_hat" => &mut self.xi_hat,
            "e_zeta" => &mut self.e_zeta,
            "e_xi" => &mut self.e_xi,
            "s" => &mut self.s,
            "v" => &mut self.v,
            "v_eq" => &mut self.v_eq,
            "d_hat" => &mut self.d_hat,
            "r" => &mut self.r,
            _ => return None,
        })
    }

    pub fn scalar_signal(&self, name: &str) -> Option<&Vec<f64>> {
        match name {
            "rho" => Some(&self.rho),
            "s_norm" => Some(&self.s_norm),
            _ => None,
        }
    }

    pub(crate) fn scalar_signal_mut(&mut self, name: &str) -> Option<&mut Vec<f64>> {
        match name {
            "rho" => Some(&mut self.rho),
            "s_norm" => Some(&mut self.s_norm),
            _ => None,
        }
    }

    /// Every series has one entry per time stamp.
    pub fn is_consistent(&self) -> bool {
        let len = self.t.len();
        JOINT_SIGNALS.iter().all(|s| {
            self.joint_signal(s)
                .is_some_and(|v| v.len() == len && v.iter().all(|x| x.len() == self.n))
        }) && SCALAR_SIGNALS
            .iter()
            .all(|s| self.scalar_signal(s).is_some_and(|v| v.len() == len))
    }
}

/// Gains for the config, before the run-specific `n`, `rho0` and `delta_s`
/// are applied. Relative gain-file paths resolve against `base_dir`.
pub fn resolve_gains(config: &ExperimentConfig, base_dir: Option<&Path>) -> Result<ObserverGains> {
    let n = config.dof();
    let spec = SynthesisSpec {
        n,
        kappa: config.synthesis.kappa,
        gamma: config.synthesis.gamma,
        rho0: config.synthesis.rho0,
        delta_s: 0.0,
    };
    match config.synthesis.source {
        GainSource::Synthesize => synthesize(&spec, &SolverOptions::default()),
        GainSource::Reference => derive_smo_gains(
            &LyapunovBlocks::reference(),
            REFERENCE_L.0,
            REFERENCE_L.1,
            &spec,
        ),
        GainSource::File => {
            let path =
                config.synthesis.gains_file.as_ref().ok_or_else(|| {
                    SmoError::InvalidConfig("synthesis.gains_file is not set".into())
                })?;
            let path = match base_dir {
                Some(dir) if path.is_relative() => dir.join(path),
                _ => path.clone(),
            };
            read_gain_file(&path)
        }
    }
}

/// Boundary layer for the config and gains.
pub fn resolve_delta_s(config: &ExperimentConfig, gains: &ObserverGains) -> f64 {
    match config.observer.delta_s {
        BoundaryLayer::Width(w) => w,
        BoundaryLayer::Rule(_) => {
            let rebased = SynthesisSpec {
                rho0: config.synthesis.rho0,
                ..gains.spec
            };
            let g = ObserverGains {
                spec: rebased,
                ..gains.clone()
            };
            deadbeat_boundary_layer(&g, config.run.dt / config.observer.substeps as f64)
        }
    }
}

/// Identified model for the config, drawing random factors from `rng` when
/// requested.
fn identified_model(
    config: &ExperimentConfig,
    model: RobotModel,
    rng: &mut ChaCha8Rng,
) -> IdentifiedModel {
    let factors = match config.identification.random_spread {
        Some(spread) => ErrorFactors::random(spread, rng),
        None => config.identification.factors,
    };
    IdentifiedModel::new(model, factors, config.identification.velocity_range)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunRecord> {
    config.validate()?;
    let gains = resolve_gains(config, None)?;
    run_with_gains(config, &gains)
}

/// Runs the closed loop with the given gains. Divergence of the plant or
/// the observer ends the run early with [`RunStatus::Aborted`] and a partial
/// record; configuration errors are returned as `Err`.
pub fn run_with_gains(config: &ExperimentConfig, gains: &ObserverGains) -> Result<RunRecord> {
    config.validate()?;
    let n = config.dof();
    let dt = config.run.dt;

    let delta_s = resolve_delta_s(config, gains);
    let spec = SynthesisSpec {
        n,
        kappa: gains.spec.kappa,
        gamma: gains.spec.gamma,
        rho0: config.synthesis.rho0,
        delta_s,
    };
    let gains = derive_smo_gains(&gains.blocks, gains.l1, gains.l2, &spec)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.run.seed);
    let model = config.plant.build();
    let identified = identified_model(config, model.clone(), &mut rng);
    let mut sensor = PositionSensor::new(config.sensor.noise_std, rng.gen());

    let rho_mode = match config.observer.rho_mode {
        RhoModeConfig::Practical => RhoMode::Practical,
        RhoModeConfig::Full => {
            let bounds = config.bounds.expect("validated");
            let budget = uncertainty_budget(&bounds, sup_dm_estimate(&identified, 500, 17))?;
            RhoMode::Full { bounds, budget }
        }
    };
    let settings = ObserverSettings {
        delta_s,
        omega_f: config.observer.omega_f,
        substeps: config.observer.substeps,
        rho_mode,
    };

    let profile = config.disturbance.profile(n);
    let q_target = config.controller.q_target(n);
    let kp = DMatrix::identity(n, n) * config.controller.kp;
    let kd = DMatrix::identity(n, n) * config.controller.kd;
    let controller = |t: f64, qm: &JointVector, qbd: &JointVector| {
        let (q_r, qd_r) = reference_trajectory(t, &q_target);
        pd_controller(qm, qbd, &q_r, &qd_r, &kp, &kd, config.controller.sign)
    };

    let mut record = RunRecord::empty(config.clone(), n, delta_s, &gains, &identified);

    let mut plant = SimState::at_rest(n);
    let (mut qm, mut qbd) = sensor.sample(&plant.q, dt);
    let mut m_hat = identified.mass_matrix(&qm);
    let mut zeta = &m_hat * &qm;
    let mut tau = controller(0.0, &qm, &qbd);

    let truth = |s: &SimState| {
        let m = identified.mass_matrix(&s.q);
        (&m * &s.q, m * &s.qd)
    };
    let init = match config.observer.init {
        ObserverInit::Zero => ObserverState::zeros(n),
        ObserverInit::Truth => {
            let (z, x) = truth(&plant);
            ObserverState::from_estimate(z, x)
        }
    };
    let mut init = init;
    if let Some(e) = &config.observer.initial_error {
        init.zeta_hat -= DVector::from_column_slice(e);
    }
    let mut observer = SlidingModeObserver::new(gains.clone(), settings, init)?;

    let mut baseline = if config.baseline.enabled {
        let k_i = config.baseline.k_i.unwrap_or(1.0 / gains.k0_scalar().abs());
        let mut mo = MomentumObserver::new(DMatrix::identity(n, n) * k_i)?;
        mo.step_momentum(&(&m_hat * &qbd), &DVector::zeros(n), dt)?;
        Some(mo)
    } else {
        None
    };

    let log = |record: &mut RunRecord,
               t: f64,
               plant: &SimState,
               qm: &JointVector,
               qbd: &JointVector,
               tau: &JointVector,
               zeta: &JointVector,
               obs: &ObserverState,
               diag: SlidingDiagnostics,
               r: JointVector| {
        let (_, xi) = truth(plant);
        record.t.push(t);
        record.q.push(plant.q.clone());
        record.qd.push(plant.qd.clone());
        record.q_meas.push(qm.clone());
        record.qbd.push(qbd.clone());
        record.tau.push(tau.clone());
        record.tau_d.push(disturbance(&profile, t));
        record.zeta.push(zeta.clone());
        record.zeta_hat.push(obs.zeta_hat.clone());
        record.e_xi.push(&xi - &obs.xi_hat);
        record.xi.push(xi);
        record.xi_hat.push(obs.xi_hat.clone());
        record.e_zeta.push(diag.e_zeta);
        record.s.push(diag.s);
        record.v.push(diag.v);
        record.v_eq.push(obs.v_eq.clone());
        record.d_hat.push(obs.d_hat.clone());
        record.r.push(r);
        record.rho.push(diag.rho);
        record.s_norm.push(diag.s_norm);
    };

    let diag = observer.diagnose(&zeta);
    log(
        &mut record,
        0.0,
        &plant,
        &qm,
        &qbd,
        &tau,
        &zeta,
        observer.state(),
        diag,
        DVector::zeros(n),
    );

    let plant_dt = dt / config.plant.substeps as f64;
    for k in 1..=config.steps() {
        let t = k as f64 * dt;
        for _ in 0..config.plant.substeps {
            match step_with(&model, &plant, &tau, |s| disturbance(&profile, s), plant_dt) {
                Ok(next) => plant = next,
                Err(e) => {
                    record.status = RunStatus::Aborted {
                        step: k,
                        reason: format!("plant: {e}"),
                    };
                    return Ok(record);
                }
            }
        }
        plant.t = t;

        let qm_prev = qm;
        let m_prev = m_hat;
        let zeta_prev = zeta;
        (qm, qbd) = sensor.sample(&plant.q, dt);
        m_hat = identified.mass_matrix(&qm);
        zeta = &m_hat * &qm;
        let mdot = compute_mdot(&m_hat, &m_prev, dt)?;
        let u_start = compute_u(&identified, &qm_prev, &qbd, &tau, &mdot)?;
        let u_end = compute_u(&identified, &qm, &qbd, &tau, &mdot)?;

        let diag = match observer.step_interval(
            IntervalSample {
                zeta_start: &zeta_prev,
                zeta_end: &zeta,
                u_start: &u_start,
                u_end: &u_end,
            },
            dt,
        ) {
            Ok(d) => d,
            Err(e) => {
                record.status = RunStatus::Aborted {
                    step: k,
                    reason: format!("observer: {e}"),
                };
                return Ok(record);
            }
        };

        let r = match baseline.as_mut() {
            Some(mo) => {
                let lower = (&u_start.lower + &u_end.lower) * 0.5;
                mo.step_momentum(&(&m_hat * &qbd), &lower, dt)?.clone()
            }
            None => DVector::zeros(n),
        };

        tau = controller(t, &qm, &qbd);
        log(
            &mut record,
            t,
            &plant,
            &qm,
            &qbd,
            &tau,
            &zeta,
            observer.state(),
            diag,
            r,
        );
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DisturbanceKind;
    use crate::harness::config::PlantKind;

    fn short(kind: DisturbanceKind) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.synthesis.source = GainSource::Reference;
        cfg.disturbance.kind = kind;
        cfg.disturbance.start = 0.5;
        cfg.disturbance.end = 1.5;
        cfg.run.duration = 2.0;
        cfg
    }

    #[test]
    fn record_series_share_length() {
        let rec = run_experiment(&short(DisturbanceKind::Square)).unwrap();
        assert!(rec.completed());
        assert_eq!(rec.len(), 2001);
        assert!(rec.is_consistent());
        assert_eq!(rec.t[1000], 1.0);
    }

    #[test]
    fn same_seed_same_record() {
        let mut cfg = short(DisturbanceKind::Sinusoid);
        cfg.sensor.noise_std = 1e-4;
        cfg.identification.random_spread = Some(0.02);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        cfg.run.seed = 1;
        let c = run_experiment(&cfg).unwrap();
        assert_ne!(a.q_meas, c.q_meas);
    }

    #[test]
    fn square_disturbance_is_recovered() {
        let rec = run_experiment(&short(DisturbanceKind::Square)).unwrap();
        let k = 1400;
        let err = (&rec.d_hat[k] - &rec.tau_d[k]).norm() / rec.tau_d[k].norm();
        assert!(err < 0.02, "relative error {err}");
    }

    #[test]
    fn truth_initialization_starts_on_the_surface() {
        let mut cfg = short(DisturbanceKind::Zero);
        cfg.observer.init = ObserverInit::Truth;
        cfg.run.duration = 0.1;
        let rec = run_experiment(&cfg).unwrap();
        assert_eq!(rec.s_norm[0], 0.0);
    }

    #[test]
    fn initial_error_offsets_the_estimate() {
        let mut cfg = short(DisturbanceKind::Zero);
        cfg.observer.init = ObserverInit::Truth;
        cfg.observer.initial_error = Some(vec![0.3, -0.4]);
        cfg.run.duration = 0.1;
        let rec = run_experiment(&cfg).unwrap();
        assert!((rec.e_zeta[0][0] - 0.3).abs() < 1e-12);
        assert!((rec.e_zeta[0][1] + 0.4).abs() < 1e-12);
    }

    #[test]
    fn literal_pd_sign_is_reported_as_divergence() {
        let mut cfg = short(DisturbanceKind::Zero);
        cfg.controller.sign = crate::dynamics::PdSign::Literal;
        cfg.run.duration = 10.0;
        let rec = run_experiment(&cfg).unwrap();
        assert!(rec.is_consistent());
        let grew = rec.q.last().unwrap().norm() > 10.0;
        assert!(!rec.completed() || grew);
    }

    #[test]
    fn synthetic_seven_joint_run() {
        let mut cfg = short(DisturbanceKind::Square);
        cfg.plant.kind = PlantKind::Synthetic;
        let rec = run_experiment(&cfg).unwrap();
        assert!(rec.completed());
        assert_eq!(rec.d_hat[0].len(), 7);
        let k = 1400;
        let err = (&rec.d_hat[k] - &rec.tau_d[k]).norm() / rec.tau_d[k].norm();
        assert!(err < 0.03, "relative error {err}");
    }
}
