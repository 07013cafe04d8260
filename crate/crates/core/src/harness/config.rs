//! Experiment configuration, read from and written to TOML.
//!
//! Every section and field has a default, so an empty file describes the
//! default sinusoid experiment on the 2-link arm.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    Bounds, DisturbanceKind, DisturbanceProfile, ErrorFactors, JointVector, PdSign, Pendulum,
    RobotModel, TwoLinkArm,
};
use crate::error::{Result, SmoError};

/// Peak external torque per joint used by the reference experiment, N·m.
pub const REFERENCE_TORQUE: [f64; 7] = [6.0, 4.8, 3.0, 3.6, 4.2, 5.4, 1.2];

/// Luenberger gains that accompany the reference Lyapunov blocks.
pub const REFERENCE_L: (f64, f64) = (156.7, 2678.0);

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plant: PlantConfig,
    pub identification: IdentificationConfig,
    pub sensor: SensorConfig,
    pub disturbance: DisturbanceConfig,
    pub controller: ControllerConfig,
    pub synthesis: SynthesisConfig,
    pub observer: ObserverConfig,
    pub baseline: BaselineConfig,
    pub run: RunConfig,
    pub metrics: MetricsConfig,
    /// Motion and identification bounds. Required by the full switching-gain
    /// mode; estimated from the record for metrics when absent.
    pub bounds: Option<Bounds>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantKind {
    #[default]
    TwoLink,
    Synthetic,
    Pendulum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    pub kind: PlantKind,
    /// Degrees of freedom of the synthetic arm.
    pub dof: usize,
    /// RK4 substeps of the plant per sample interval.
    pub substeps: usize,
    pub two_link: TwoLinkArm,
    pub pendulum: Pendulum,
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig {
            kind: PlantKind::TwoLink,
            dof: 7,
            substeps: 4,
            two_link: TwoLinkArm::default(),
            pendulum: Pendulum::unit_inertia(),
        }
    }
}

impl PlantConfig {
    pub fn build(&self) -> RobotModel {
        match self.kind {
            PlantKind::TwoLink => {
                RobotModel::new(crate::dynamics::Plant::TwoLink(self.two_link.clone()))
            }
            PlantKind::Synthetic => RobotModel::synthetic(self.dof),
            PlantKind::Pendulum => RobotModel::pendulum(self.pendulum.clone()),
        }
    }

    pub fn dof(&self) -> usize {
        match self.kind {
            PlantKind::TwoLink => 2,
            PlantKind::Synthetic => self.dof,
            PlantKind::Pendulum => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentificationConfig {
    pub factors: ErrorFactors,
    /// When set, factors are drawn uniformly from `[1 - spread, 1 + spread]`
    /// with the run seed, overriding `factors`.
    pub random_spread: Option<f64>,
    /// Joint-speed range sampled when measuring the identification errors, rad/s.
    pub velocity_range: f64,
}

impl Default for IdentificationConfig {
    fn default() -> Self {
        IdentificationConfig {
            factors: ErrorFactors::PERFECT,
            random_spread: None,
            velocity_range: 3.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    /// Standard deviation of the position noise, rad.
    pub noise_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbanceConfig {
    pub kind: DisturbanceKind,
    /// Peak torque per joint; defaults to the leading entries of [`REFERENCE_TORQUE`].
    pub amplitude: Option<Vec<f64>>,
    pub start: f64,
    pub end: f64,
}

impl Default for DisturbanceConfig {
    fn default() -> Self {
        DisturbanceConfig {
            kind: DisturbanceKind::Sinusoid,
            amplitude: None,
            start: 12.5,
            end: 14.5,
        }
    }
}

impl DisturbanceConfig {
    pub fn amplitude(&self, n: usize) -> JointVector {
        match &self.amplitude {
            Some(a) => DVector::from_column_slice(a),
            None => DVector::from_fn(n, |i, _| REFERENCE_TORQUE[i % REFERENCE_TORQUE.len()]),
        }
    }

    pub fn profile(&self, n: usize) -> DisturbanceProfile {
        DisturbanceProfile {
            kind: self.kind,
            amplitude: self.amplitude(n),
            start: self.start,
            end: self.end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Diagonal proportional gain.
    pub kp: f64,
    /// Diagonal derivative gain.
    pub kd: f64,
    pub sign: PdSign,
    /// Reference amplitude per joint, rad; a scalar is broadcast.
    pub q_target: Vec<f64>,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            kp: 200.0,
            kd: 8.0,
            sign: PdSign::Stabilizing,
            q_target: vec![0.7],
        }
    }
}

impl ControllerConfig {
    pub fn q_target(&self, n: usize) -> JointVector {
        if self.q_target.len() == 1 {
            DVector::from_element(n, self.q_target[0])
        } else {
            DVector::from_column_slice(&self.q_target)
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainSource {
    /// Solve the LMI for `(kappa, gamma)`.
    #[default]
    Synthesize,
    /// The reference Lyapunov blocks with `L = (156.7, 2678)`.
    Reference,
    /// Load `gains_file`.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub source: GainSource,
    pub kappa: f64,
    pub gamma: f64,
    pub rho0: f64,
    pub gains_file: Option<PathBuf>,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            source: GainSource::Synthesize,
            kappa: 10.0,
            gamma: 0.1,
            rho0: 250.0,
            gains_file: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryRule {
    /// `rho0 |H K0| dt / substeps`, see [`crate::observer::deadbeat_boundary_layer`].
    Deadbeat,
}

/// `delta_s = 0.05` or `delta_s = "deadbeat"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundaryLayer {
    Width(f64),
    Rule(BoundaryRule),
}

impl Default for BoundaryLayer {
    fn default() -> Self {
        BoundaryLayer::Rule(BoundaryRule::Deadbeat)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoModeConfig {
    #[default]
    Practical,
    Full,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObserverInit {
    /// `x^(0) = 0`.
    #[default]
    Zero,
    /// `x^(0)` equal to the identified-coordinate plant state.
    Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObserverConfig {
    pub delta_s: BoundaryLayer,
    /// Equivalent-control filter cutoff, rad/s.
    pub omega_f: f64,
    pub substeps: usize,
    pub rho_mode: RhoModeConfig,
    pub init: ObserverInit,
    /// Added to the initial `zeta` error, so `e_zeta(0) = e_init + initial_error`.
    pub initial_error: Option<Vec<f64>>,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        ObserverConfig {
            delta_s: BoundaryLayer::default(),
            omega_f: 100.0,
            substeps: 20,
            rho_mode: RhoModeConfig::Practical,
            init: ObserverInit::Zero,
            initial_error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub enabled: bool,
    /// Residual bandwidth, 1/s; defaults to `1/K0` to match the observer.
    pub k_i: Option<f64>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            enabled: true,
            k_i: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            duration: 30.0,
            dt: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Start of the scored window, s.
    pub transient_end: f64,
    /// Consecutive in-layer steps that count as reaching.
    pub sustain_steps: usize,
    /// Overrides the derived noise floor, N·m.
    pub noise_floor: Option<f64>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            transient_end: 10.0,
            sustain_steps: 10,
            noise_floor: None,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SmoError::InvalidConfig(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

fn length(name: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n || v.iter().any(|x| !x.is_finite()) {
        return Err(SmoError::InvalidConfig(format!(
            "{name} needs {n} finite entries, got {v:?}"
        )));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn dof(&self) -> usize {
        self.plant.dof()
    }

    /// Number of samples after `t = 0`.
    pub fn steps(&self) -> usize {
        (self.run.duration / self.run.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dof();
        if n == 0 {
            return Err(SmoError::InvalidConfig(
                "plant needs at least one joint".into(),
            ));
        }
        positive("run.duration", self.run.duration)?;
        positive("run.dt", self.run.dt)?;
        let ratio = self.run.duration / self.run.dt;
        if (ratio - ratio.round()).abs() > 1e-6 * ratio.max(1.0) {
            return Err(SmoError::InvalidConfig(format!(
                "run.duration / run.dt = {ratio} is not an integer"
            )));
        }
        if self.plant.substeps == 0 || self.observer.substeps == 0 {
            return Err(SmoError::InvalidConfig(
                "substeps must be at least 1".into(),
            ));
        }
        positive("synthesis.kappa", self.synthesis.kappa)?;
        positive("synthesis.gamma", self.synthesis.gamma)?;
        positive("synthesis.rho0", self.synthesis.rho0)?;
        positive("observer.omega_f", self.observer.omega_f)?;
        if let BoundaryLayer::Width(w) = self.observer.delta_s {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(SmoError::InvalidConfig(format!(
                    "observer.delta_s must be >= 0, got {w}"
                )));
            }
        }
        if !(self.sensor.noise_std >= 0.0 && self.sensor.noise_std.is_finite()) {
            return Err(SmoError::InvalidConfig(
                "sensor.noise_std must be >= 0".into(),
            ));
        }
        positive(
            "identification.velocity_range",
            self.identification.velocity_range,
        )?;
        if let Some(s) = self.identification.random_spread {
            if !(0.0..1.0).contains(&s) {
                return Err(SmoError::InvalidConfig(format!(
                    "identification.random_spread must be in [0, 1), got {s}"
                )));
            }
        }
        let f = &self.identification.factors;
        for (name, v) in [
            ("inertia", f.inertia),
            ("coriolis", f.coriolis),
            ("gravity", f.gravity),
            ("friction", f.friction),
        ] {
            positive(&format!("identification.factors.{name}"), v)?;
        }
        if let Some(a) = &self.disturbance.amplitude {
            length("disturbance.amplitude", a, n)?;
        }
        if !(self.disturbance.end >= self.disturbance.start) {
            return Err(SmoError::InvalidConfig(
                "disturbance.end must not precede start".into(),
            ));
        }
        if self.controller.q_target.len() != 1 {
            length("controller.q_target", &self.controller.q_target, n)?;
        }
        if !(self.controller.kp >= 0.0 && self.controller.kd >= 0.0) {
            return Err(SmoError::InvalidConfig(
                "controller gains must be nonnegative".into(),
            ));
        }
        if let Some(e) = &self.observer.initial_error {
            length("observer.initial_error", e, n)?;
        }
        if let Some(k) = self.baseline.k_i {
            positive("baseline.k_i", k)?;
        }
        if self.synthesis.source == GainSource::File && self.synthesis.gains_file.is_none() {
            return Err(SmoError::InvalidConfig(
                "synthesis.source = \"file\" needs synthesis.gains_file".into(),
            ));
        }
        if self.observer.rho_mode == RhoModeConfig::Full && self.bounds.is_none() {
            return Err(SmoError::InvalidConfig(
                "observer.rho_mode = \"full\" needs a [bounds] section".into(),
            ));
        }
        if let Some(b) = &self.bounds {
            b.validate()
                .map_err(|e| SmoError::InvalidConfig(format!("bounds: {e}")))?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SmoError::io(path, e))?;
        let cfg = Self::from_toml(&text).map_err(|e| SmoError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default_experiment() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        cfg.validate().unwrap();
        assert_eq!(cfg.steps(), 30_000);
        assert_eq!(cfg.disturbance.amplitude(2).as_slice(), &[6.0, 4.8]);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = ExperimentConfig::default();
        cfg.plant.kind = PlantKind::Synthetic;
        cfg.observer.delta_s = BoundaryLayer::Width(0.05);
        cfg.identification.random_spread = Some(0.02);
        cfg.bounds = Some(Bounds {
            alpha1: 2.0,
            ..Default::default()
        });
        let text = cfg.to_toml();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn boundary_layer_accepts_number_or_rule() {
        let a = ExperimentConfig::from_toml("[observer]\ndelta_s = 0.05\n").unwrap();
        assert_eq!(a.observer.delta_s, BoundaryLayer::Width(0.05));
        let b = ExperimentConfig::from_toml("[observer]\ndelta_s = \"deadbeat\"\n").unwrap();
        assert_eq!(
            b.observer.delta_s,
            BoundaryLayer::Rule(BoundaryRule::Deadbeat)
        );
        assert!(ExperimentConfig::from_toml("[observer]\ndelta_s = \"wide\"\n").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("[run]\nduraton = 3.0\n").is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = ExperimentConfig::default();
        cfg.run.dt = 0.0007;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.disturbance.amplitude = Some(vec![1.0; 3]);
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.observer.rho_mode = RhoModeConfig::Full;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.synthesis.source = GainSource::File;
        assert!(cfg.validate().is_err());
    }
}
