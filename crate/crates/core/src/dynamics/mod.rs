//! Euler-Lagrange plant `M(q) q'' + N(q, q') + G(q) + F(q') = tau + tau_d`,
//! its identified counterpart, the tracking controller and the sampled sensors.

mod models;
mod signals;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SmoError};

pub use models::{christoffel_coriolis, Pendulum, SyntheticArm, TwoLinkArm};
pub use signals::{
    differentiate_position, disturbance, pd_controller, reference_trajectory, DisturbanceKind,
    DisturbanceProfile, PdSign, PositionSensor,
};

/// Joint-space vector (rad, rad/s, rad/s^2 or N·m depending on context).
pub type JointVector = DVector<f64>;

/// Seed used for the deterministic workspace samples behind stored bounds.
const WORKSPACE_SEED: u64 = 0x5eed;
const WORKSPACE_SAMPLES: usize = 2000;

pub(crate) fn check_vector(v: &DVector<f64>, n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return Err(SmoError::Domain(format!(
            "{what} has length {}, expected {n}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(SmoError::Domain(format!("{what} has non-finite entries")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Plant {
    TwoLink(TwoLinkArm),
    Pendulum(Pendulum),
    Synthetic(SyntheticArm),
}

/// Evaluable plant plus the spectral-norm bound `sigma_m` of its inertia over a
/// sampled workspace.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    plant: Plant,
    sigma_m: f64,
}

/// `(M, N, G, F)` at one state.
#[derive(Debug, Clone)]
pub struct Dynamics {
    pub m: DMatrix<f64>,
    pub n: JointVector,
    pub g: JointVector,
    pub f: JointVector,
}

impl RobotModel {
    pub fn new(plant: Plant) -> Self {
        let mut model = RobotModel {
            plant,
            sigma_m: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(WORKSPACE_SEED);
        model.sigma_m = (0..WORKSPACE_SAMPLES)
            .map(|_| spectral_norm_sym(&model.mass_matrix(&model.sample_configuration(&mut rng))))
            .fold(0.0, f64::max);
        model
    }

    pub fn two_link() -> Self {
        Self::new(Plant::TwoLink(TwoLinkArm::default()))
    }

    pub fn synthetic(n: usize) -> Self {
        Self::new(Plant::Synthetic(SyntheticArm::new(n)))
    }

    pub fn pendulum(p: Pendulum) -> Self {
        Self::new(Plant::Pendulum(p))
    }

    pub fn plant(&self) -> &Plant {
        &self.plant
    }

    pub fn dof(&self) -> usize {
        match &self.plant {
            Plant::TwoLink(_) => 2,
            Plant::Pendulum(_) => 1,
            Plant::Synthetic(s) => s.dof(),
        }
    }

    /// Upper bound on `||M(q)||_2` over the sampled workspace.
    pub fn sigma_m(&self) -> f64 {
        self.sigma_m
    }

    pub fn mass_matrix(&self, q: &JointVector) -> DMatrix<f64> {
        match &self.plant {
            Plant::TwoLink(a) => a.mass_matrix(q),
            Plant::Pendulum(p) => DMatrix::from_element(1, 1, p.inertia()),
            Plant::Synthetic(s) => s.mass_matrix(q),
        }
    }

    /// `dM/dq_k` for every joint `k`.
    pub fn mass_matrix_partials(&self, q: &JointVector) -> Vec<DMatrix<f64>> {
        match &self.plant {
            Plant::TwoLink(a) => a.mass_matrix_partials(q),
            Plant::Pendulum(_) => vec![DMatrix::zeros(1, 1)],
            Plant::Synthetic(s) => s.mass_matrix_partials(q),
        }
    }

    pub fn coriolis(&self, q: &JointVector, qd: &JointVector) -> JointVector {
        match &self.plant {
            Plant::TwoLink(a) => a.coriolis(q, qd),
            Plant::Pendulum(_) => DVector::zeros(1),
            Plant::Synthetic(s) => christoffel_coriolis(&s.mass_matrix_partials(q), qd),
        }
    }

    pub fn gravity(&self, q: &JointVector) -> JointVector {
        match &self.plant {
            Plant::TwoLink(a) => a.gravity_torque(q),
            Plant::Pendulum(p) => {
                DVector::from_element(1, p.mass * p.gravity * p.length * q[0].sin())
            }
            Plant::Synthetic(s) => s.gravity_torque(q),
        }
    }

    pub fn friction(&self, qd: &JointVector) -> JointVector {
        match &self.plant {
            Plant::TwoLink(a) => {
                DVector::from_vec(vec![a.damping[0] * qd[0], a.damping[1] * qd[1]])
            }
            Plant::Pendulum(p) => DVector::from_element(1, p.damping * qd[0]),
            Plant::Synthetic(s) => qd.component_mul(&DVector::from_column_slice(&s.damping)),
        }
    }

    pub fn potential_energy(&self, q: &JointVector) -> f64 {
        match &self.plant {
            Plant::TwoLink(a) => a.potential_energy(q),
            Plant::Pendulum(p) => -p.mass * p.gravity * p.length * q[0].cos(),
            Plant::Synthetic(s) => s.potential_energy(q),
        }
    }

    pub fn kinetic_energy(&self, q: &JointVector, qd: &JointVector) -> f64 {
        0.5 * qd.dot(&(self.mass_matrix(q) * qd))
    }

    /// Same plant with friction removed, for energy-conservation checks.
    pub fn frictionless(&self) -> Self {
        let mut plant = self.plant.clone();
        match &mut plant {
            Plant::TwoLink(a) => a.damping = [0.0; 2],
            Plant::Pendulum(p) => p.damping = 0.0,
            Plant::Synthetic(s) => s.damping.iter_mut().for_each(|d| *d = 0.0),
        }
        RobotModel {
            plant,
            sigma_m: self.sigma_m,
        }
    }

    /// Uniform draw from `[-pi, pi]^n`.
    pub fn sample_configuration<R: Rng>(&self, rng: &mut R) -> JointVector {
        DVector::from_fn(self.dof(), |_, _| {
            rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)
        })
    }
}

/// `(M, N, G, F)` with input validation.
pub fn eval_dynamics(model: &RobotModel, q: &JointVector, qd: &JointVector) -> Result<Dynamics> {
    let n = model.dof();
    check_vector(q, n, "q")?;
    check_vector(qd, n, "qd")?;
    Ok(Dynamics {
        m: model.mass_matrix(q),
        n: model.coriolis(q, qd),
        g: model.gravity(q),
        f: model.friction(qd),
    })
}

/// Per-term multiplicative identification factors (1.0 = perfect).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorFactors {
    pub inertia: f64,
    pub coriolis: f64,
    pub gravity: f64,
    pub friction: f64,
}

impl Default for ErrorFactors {
    fn default() -> Self {
        Self::PERFECT
    }
}

impl ErrorFactors {
    pub const PERFECT: ErrorFactors = ErrorFactors {
        inertia: 1.0,
        coriolis: 1.0,
        gravity: 1.0,
        friction: 1.0,
    };

    /// Independent uniform draws in `[1 - spread, 1 + spread]`.
    pub fn random<R: Rng>(spread: f64, rng: &mut R) -> Self {
        let mut draw = || 1.0 + spread * rng.gen_range(-1.0..=1.0);
        ErrorFactors {
            inertia: draw(),
            coriolis: draw(),
            gravity: draw(),
            friction: draw(),
        }
    }

    pub fn max_deviation(&self) -> f64 {
        [self.inertia, self.coriolis, self.gravity, self.friction]
            .iter()
            .map(|f| (f - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Identified model `M^, N^, G^, F^` obtained by scaling each term of the
/// true plant, with identification error bounds measured on a sampled workspace.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiedModel {
    pub base: RobotModel,
    pub factors: ErrorFactors,
    pub eps_m: f64,
    pub eps_n: f64,
    pub eps_g: f64,
    pub eps_f: f64,
}

impl IdentifiedModel {
    /// `velocity_range` bounds the sampled joint speeds used for `eps_n`/`eps_f`.
    pub fn new(base: RobotModel, factors: ErrorFactors, velocity_range: f64) -> Self {
        let mut id = IdentifiedModel {
            base,
            factors,
            eps_m: 0.0,
            eps_n: 0.0,
            eps_g: 0.0,
            eps_f: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(WORKSPACE_SEED + 1);
        let n = id.dof();
        for _ in 0..WORKSPACE_SAMPLES {
            let q = id.base.sample_configuration(&mut rng);
            let qd = DVector::from_fn(n, |_, _| rng.gen_range(-velocity_range..=velocity_range));
            let b = &id.base;
            id.eps_m = id
                .eps_m
                .max(spectral_norm_sym(&(b.mass_matrix(&q) - id.mass_matrix(&q))));
            id.eps_n = id
                .eps_n
                .max((b.coriolis(&q, &qd) - id.coriolis(&q, &qd)).norm());
            id.eps_g = id.eps_g.max((b.gravity(&q) - id.gravity(&q)).norm());
            id.eps_f = id.eps_f.max((b.friction(&qd) - id.friction(&qd)).norm());
        }
        id
    }

    pub fn perfect(base: RobotModel) -> Self {
        Self::new(base, ErrorFactors::PERFECT, 1.0)
    }

    pub fn dof(&self) -> usize {
        self.base.dof()
    }

    pub fn mass_matrix(&self, q: &JointVector) -> DMatrix<f64> {
        self.base.mass_matrix(q) * self.factors.inertia
    }

    pub fn mass_matrix_partials(&self, q: &JointVector) -> Vec<DMatrix<f64>> {
        self.base
            .mass_matrix_partials(q)
            .into_iter()
            .map(|d| d * self.factors.inertia)
            .collect()
    }

    pub fn coriolis(&self, q: &JointVector, qd: &JointVector) -> JointVector {
        self.base.coriolis(q, qd) * self.factors.coriolis
    }

    pub fn gravity(&self, q: &JointVector) -> JointVector {
        self.base.gravity(q) * self.factors.gravity
    }

    pub fn friction(&self, qd: &JointVector) -> JointVector {
        self.base.friction(qd) * self.factors.friction
    }
}

/// Motion and identification bounds used by the uncertainty budget.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha_tau: f64,
    pub eps_m: f64,
    pub eps_n: f64,
    pub eps_g: f64,
    pub eps_f: f64,
    pub eps_qd: f64,
    pub sigma_m: f64,
}

impl Bounds {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.alpha1,
            self.alpha2,
            self.alpha_tau,
            self.eps_m,
            self.eps_n,
            self.eps_g,
            self.eps_f,
            self.eps_qd,
            self.sigma_m,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SmoError::Domain(
                "bounds must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Simulation state of the continuous plant.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub q: JointVector,
    pub qd: JointVector,
}

impl SimState {
    pub fn at_rest(n: usize) -> Self {
        SimState {
            t: 0.0,
            q: DVector::zeros(n),
            qd: DVector::zeros(n),
        }
    }
}

/// Forward dynamics `q'' = M^-1 (tau + tau_d - N - G - F)` via Cholesky.
pub fn forward_dynamics(
    model: &RobotModel,
    q: &JointVector,
    qd: &JointVector,
    torque: &JointVector,
) -> Result<JointVector> {
    let rhs = torque - model.coriolis(q, qd) - model.gravity(q) - model.friction(qd);
    let chol = model
        .mass_matrix(q)
        .cholesky()
        .ok_or_else(|| SmoError::Domain("mass matrix is not positive definite".into()))?;
    Ok(chol.solve(&rhs))
}

/// Fourth-order Runge-Kutta step with `tau` held and `tau_d` given as a
/// function of time.
pub fn step_with<D>(
    model: &RobotModel,
    state: &SimState,
    tau: &JointVector,
    tau_d: D,
    dt: f64,
) -> Result<SimState>
where
    D: Fn(f64) -> JointVector,
{
    if !(dt > 0.0) {
        return Err(SmoError::Domain(format!("dt must be positive, got {dt}")));
    }
    let f = |t: f64, q: &JointVector, qd: &JointVector| -> Result<JointVector> {
        forward_dynamics(model, q, qd, &(tau + tau_d(t)))
    };
    let (t, q, qd) = (state.t, &state.q, &state.qd);
    let h = 0.5 * dt;

    let a1 = f(t, q, qd)?;
    let v1 = qd.clone();
    let q2 = q + &v1 * h;
    let v2 = qd + &a1 * h;
    let a2 = f(t + h, &q2, &v2)?;
    let q3 = q + &v2 * h;
    let v3 = qd + &a2 * h;
    let a3 = f(t + h, &q3, &v3)?;
    let q4 = q + &v3 * dt;
    let v4 = qd + &a3 * dt;
    let a4 = f(t + dt, &q4, &v4)?;

    let q_next = q + (v1 + &v2 * 2.0 + &v3 * 2.0 + &v4) * (dt / 6.0);
    let qd_next = qd + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0);
    if q_next.iter().chain(qd_next.iter()).any(|x| !x.is_finite()) {
        return Err(SmoError::Domain("plant state became non-finite".into()));
    }
    Ok(SimState {
        t: t + dt,
        q: q_next,
        qd: qd_next,
    })
}

/// RK4 step with constant applied and disturbance torques.
pub fn step(
    model: &RobotModel,
    state: &SimState,
    tau: &JointVector,
    tau_d: &JointVector,
    dt: f64,
) -> Result<SimState> {
    step_with(model, state, tau, |_| tau_d.clone(), dt)
}

/// Largest eigenvalue magnitude of a symmetric matrix.
pub(crate) fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0, |acc: f64, x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn stretched_pose_has_only_gravity() {
        let model = RobotModel::two_link();
        let z = DVector::zeros(2);
        let d = eval_dynamics(&model, &z, &z).unwrap();
        assert_eq!(d.n, z);
        assert_eq!(d.f, z);
        let a = TwoLinkArm::default();
        let g2 = a.m2 * a.lc2 * a.gravity;
        let g1 = (a.m1 * a.lc1 + a.m2 * a.l1) * a.gravity + g2;
        assert_relative_eq!(d.g[0], g1, epsilon = 1e-12);
        assert_relative_eq!(d.g[1], g2, epsilon = 1e-12);
    }

    #[test]
    fn pendulum_inertia_is_constant() {
        let model = RobotModel::pendulum(Pendulum {
            mass: 2.0,
            length: 0.5,
            gravity: 9.81,
            damping: 0.0,
        });
        for q in [-1.0, 0.0, 2.5] {
            let m = model.mass_matrix(&DVector::from_element(1, q));
            assert_eq!(m[(0, 0)], 0.5);
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let model = RobotModel::two_link();
        let q = DVector::from_vec(vec![f64::NAN, 0.0]);
        assert!(eval_dynamics(&model, &q, &DVector::zeros(2)).is_err());
        assert!(eval_dynamics(&model, &DVector::zeros(3), &DVector::zeros(3)).is_err());
    }

    #[test]
    fn two_link_coriolis_matches_christoffel_route() {
        let a = TwoLinkArm::default();
        let q = DVector::from_vec(vec![0.3, -1.1]);
        let qd = DVector::from_vec(vec![1.7, -0.4]);
        let generic = christoffel_coriolis(&a.mass_matrix_partials(&q), &qd);
        assert_relative_eq!(a.coriolis(&q, &qd), generic, epsilon = 1e-12);
    }

    #[test]
    fn analytic_partials_match_finite_differences() {
        for model in [RobotModel::two_link(), RobotModel::synthetic(7)] {
            let n = model.dof();
            let q = DVector::from_fn(n, |i, _| 0.4 - 0.3 * i as f64);
            let h = 1e-6;
            for (k, dm) in model.mass_matrix_partials(&q).iter().enumerate() {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[k] += h;
                qm[k] -= h;
                let fd = (model.mass_matrix(&qp) - model.mass_matrix(&qm)) / (2.0 * h);
                assert!((fd - dm).amax() < 1e-8);
            }
        }
    }

    #[test]
    fn gravity_is_potential_gradient() {
        for model in [RobotModel::two_link(), RobotModel::synthetic(7)] {
            let n = model.dof();
            let q = DVector::from_fn(n, |i, _| 0.7 * (i as f64 + 1.0).sin());
            let g = model.gravity(&q);
            let h = 1e-6;
            for k in 0..n {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[k] += h;
                qm[k] -= h;
                let fd = (model.potential_energy(&qp) - model.potential_energy(&qm)) / (2.0 * h);
                assert_relative_eq!(fd, g[k], epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn equilibrium_is_preserved() {
        let model = RobotModel::pendulum(Pendulum::unit_inertia());
        let s = SimState::at_rest(1);
        let z = DVector::zeros(1);
        let next = step(&model, &s, &z, &z, 1e-3).unwrap();
        assert_eq!(next.q, s.q);
        assert_eq!(next.qd, s.qd);
        assert_eq!(next.t, 1e-3);
    }

    #[test]
    fn double_integrator_reaches_unit_speed() {
        let model = RobotModel::pendulum(Pendulum::unit_inertia());
        let mut s = SimState::at_rest(1);
        let tau = DVector::from_element(1, 1.0);
        let z = DVector::zeros(1);
        for _ in 0..1000 {
            s = step(&model, &s, &tau, &z, 1e-3).unwrap();
        }
        assert!((s.qd[0] - 1.0).abs() < 1e-6);
        assert!((s.q[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn rk4_converges_at_fourth_order() {
        let model = RobotModel::two_link();
        let endpoint = |dt: f64| {
            let mut s = SimState {
                t: 0.0,
                q: DVector::from_vec(vec![0.4, -0.6]),
                qd: DVector::from_vec(vec![0.5, 0.0]),
            };
            let z = DVector::zeros(2);
            let steps = (1.0 / dt).round() as usize;
            for _ in 0..steps {
                s = step(&model, &s, &z, &z, dt).unwrap();
            }
            s.q
        };
        let reference = endpoint(1e-4);
        let err: Vec<f64> = [0.02, 0.01, 0.005]
            .iter()
            .map(|&dt| (endpoint(dt) - &reference).norm())
            .collect();
        for pair in err.windows(2) {
            let ratio = pair[0] / pair[1];
            assert!((ratio - 16.0).abs() < 2.0, "convergence ratio {ratio}");
        }
    }

    #[test]
    fn identified_model_with_unit_factors_is_exact() {
        let base = RobotModel::two_link();
        let id = IdentifiedModel::perfect(base.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let q = base.sample_configuration(&mut rng);
            let qd = base.sample_configuration(&mut rng);
            assert_eq!(id.mass_matrix(&q), base.mass_matrix(&q));
            assert_eq!(id.coriolis(&q, &qd), base.coriolis(&q, &qd));
            assert_eq!(id.gravity(&q), base.gravity(&q));
            assert_eq!(id.friction(&qd), base.friction(&qd));
        }
        assert_eq!(id.eps_m, 0.0);
        assert_eq!(id.eps_g, 0.0);
    }

    #[test]
    fn identification_error_bound_scales_with_factor() {
        let base = RobotModel::two_link();
        let factors = ErrorFactors {
            inertia: 1.02,
            ..ErrorFactors::PERFECT
        };
        let id = IdentifiedModel::new(base.clone(), factors, 1.0);
        assert_relative_eq!(id.eps_m, 0.02 * base.sigma_m(), max_relative = 1e-2);
    }

    #[test]
    fn synthetic_model_sigma_bound_holds() {
        let model = RobotModel::synthetic(7);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let q = model.sample_configuration(&mut rng);
            assert!(spectral_norm_sym(&model.mass_matrix(&q)) <= model.sigma_m() * 1.01);
        }
    }

    proptest! {
        #[test]
        fn inertia_is_symmetric_positive_definite(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for model in [RobotModel::two_link(), RobotModel::synthetic(7)] {
                let q = model.sample_configuration(&mut rng);
                let m = model.mass_matrix(&q);
                prop_assert!((&m - m.transpose()).amax() < 1e-12);
                prop_assert!(m.symmetric_eigenvalues().min() > 0.0);
            }
        }

        #[test]
        fn coriolis_is_energy_neutral(q1 in -3.0..3.0f64, q2 in -3.0..3.0f64,
                                      v1 in -5.0..5.0f64, v2 in -5.0..5.0f64) {
            // qd^T (N - Mdot qd / 2) = 0 for Christoffel-consistent Coriolis terms.
            let model = RobotModel::two_link();
            let q = DVector::from_vec(vec![q1, q2]);
            let qd = DVector::from_vec(vec![v1, v2]);
            let mut mdot = DMatrix::zeros(2, 2);
            for (k, dm) in model.mass_matrix_partials(&q).iter().enumerate() {
                mdot += dm * qd[k];
            }
            let work = qd.dot(&(model.coriolis(&q, &qd) - &mdot * &qd * 0.5));
            prop_assert!(work.abs() < 1e-10);
        }
    }
}
