use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::JointVector;

/// Periodic reference active on `4 < t <= 92` s:
/// `q_r = (1 - cos(pi t / 4 - 1)) q_t`, zero elsewhere.
pub fn reference_trajectory(t: f64, q_t: &JointVector) -> (JointVector, JointVector) {
    if t > 4.0 && t <= 92.0 {
        let phase = PI * t / 4.0 - 1.0;
        (q_t * (1.0 - phase.cos()), q_t * (PI / 4.0 * phase.sin()))
    } else {
        (DVector::zeros(q_t.len()), DVector::zeros(q_t.len()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdSign {
    /// `tau = -Kp (q - q_r) - Kd (qd - qd_r)`.
    #[default]
    Stabilizing,
    /// `tau = Kp (q - q_r) + Kd (qd - qd_r)`, positive error feedback.
    Literal,
}

pub fn pd_controller(
    q: &JointVector,
    qd: &JointVector,
    q_r: &JointVector,
    qd_r: &JointVector,
    kp: &DMatrix<f64>,
    kd: &DMatrix<f64>,
    sign: PdSign,
) -> JointVector {
    let tau = kp * (q - q_r) + kd * (qd - qd_r);
    match sign {
        PdSign::Stabilizing => -tau,
        PdSign::Literal => tau,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceKind {
    Sinusoid,
    Square,
    Triangle,
    ContactPulse,
    Zero,
}

/// External torque applied on the closed window `[start, end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceProfile {
    pub kind: DisturbanceKind,
    pub amplitude: JointVector,
    pub start: f64,
    pub end: f64,
}

impl DisturbanceProfile {
    pub fn zero(n: usize) -> Self {
        DisturbanceProfile {
            kind: DisturbanceKind::Zero,
            amplitude: DVector::zeros(n),
            start: 0.0,
            end: 0.0,
        }
    }

    /// Scalar shape multiplying the amplitude vector.
    pub fn shape(&self, t: f64) -> f64 {
        if t < self.start || t > self.end {
            return 0.0;
        }
        let width = self.end - self.start;
        let x = t - self.start;
        match self.kind {
            DisturbanceKind::Zero => 0.0,
            DisturbanceKind::Square => 1.0,
            DisturbanceKind::Sinusoid => (PI / 2.0 * x).sin(),
            DisturbanceKind::Triangle => {
                let half = 0.5 * width;
                if half <= 0.0 {
                    0.0
                } else {
                    (1.0 - (x - half).abs() / half).max(0.0)
                }
            }
            DisturbanceKind::ContactPulse => {
                if width <= 0.0 {
                    0.0
                } else {
                    0.5 * (1.0 - (2.0 * PI * x / width).cos())
                }
            }
        }
    }
}

pub fn disturbance(profile: &DisturbanceProfile, t: f64) -> JointVector {
    &profile.amplitude * profile.shape(t)
}

/// Backward difference `(q_k - q_{k-1}) / dt`.
pub fn differentiate_position(q_k: &JointVector, q_prev: &JointVector, dt: f64) -> JointVector {
    (q_k - q_prev) / dt
}

/// Encoder model: additive i.i.d. Gaussian position noise, velocity by
/// backward differencing of the noisy samples.
#[derive(Debug, Clone)]
pub struct PositionSensor {
    noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
    previous: Option<JointVector>,
}

impl PositionSensor {
    pub fn new(noise_std: f64, seed: u64) -> Self {
        let noise = (noise_std > 0.0).then(|| Normal::new(0.0, noise_std).expect("finite std"));
        PositionSensor {
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
            previous: None,
        }
    }

    pub fn measure(&mut self, q: &JointVector) -> JointVector {
        match &self.noise {
            Some(dist) => {
                let rng = &mut self.rng;
                q.map(|x| x + dist.sample(rng))
            }
            None => q.clone(),
        }
    }

    /// Returns the noisy position and the differenced velocity. The first
    /// sample reports zero velocity.
    pub fn sample(&mut self, q: &JointVector, dt: f64) -> (JointVector, JointVector) {
        let qm = self.measure(q);
        let qbd = match &self.previous {
            Some(prev) => differentiate_position(&qm, prev, dt),
            None => DVector::zeros(q.len()),
        };
        self.previous = Some(qm.clone());
        (qm, qbd)
    }
}
