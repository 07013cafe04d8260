//! Sliding-mode state and disturbance observer on the linear model
//! `x' = A x + u + E d`, `zeta = C x`, plus a generalized-momentum residual
//! baseline.
//!
//! The recursion, per joint block, is
//!
//! ```text
//! zeta^' = xi^ + u_upper + L1 e_zeta - K0 v
//! xi^'   = u_lower + L2 e_zeta - v
//! v      = -rho s / (||s|| + delta_s),   s = H e_zeta
//! v_eq'  = omega_f (v - v_eq),           d^ = -v_eq
//! ```
//!
//! On the sliding surface `e_zeta = 0` this leaves `e_xi = -K0 v_eq` and
//! `v_eq' = -(v_eq + d) / K0`, a first-order filter with pole `-1/K0` that
//! drives `v_eq` to `-d`.
//!
//! The observer sees only `zeta`, `u` and the gains. It never inverts the
//! inertia matrix, and measured velocity reaches it only through `u`.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{check_vector, Bounds, IdentifiedModel, JointVector};
use crate::error::{Result, SmoError};
use crate::linearization::{compute_u, AuxiliaryInput, UncertaintyBudget};
use crate::synthesis::ObserverGains;

/// States beyond this magnitude are treated as divergence.
const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub zeta_hat: JointVector,
    pub xi_hat: JointVector,
    /// Equivalent-control filter state.
    pub v_eq: JointVector,
    pub d_hat: JointVector,
}

impl ObserverState {
    pub fn zeros(n: usize) -> Self {
        ObserverState {
            zeta_hat: DVector::zeros(n),
            xi_hat: DVector::zeros(n),
            v_eq: DVector::zeros(n),
            d_hat: DVector::zeros(n),
        }
    }

    /// Starts at the given state estimate with an idle filter.
    pub fn from_estimate(zeta_hat: JointVector, xi_hat: JointVector) -> Self {
        let n = zeta_hat.len();
        ObserverState {
            zeta_hat,
            xi_hat,
            v_eq: DVector::zeros(n),
            d_hat: DVector::zeros(n),
        }
    }

    fn is_sane(&self) -> bool {
        [&self.zeta_hat, &self.xi_hat, &self.v_eq].iter().all(|v| {
            v.iter()
                .all(|x| x.is_finite() && x.abs() < DIVERGENCE_LIMIT)
        })
    }
}

/// How the switching gain is scheduled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RhoMode {
    /// `rho0 + ||Q_zeta e_zeta|| + ||Q_xi xi^||`.
    Practical,
    /// The practical terms plus the bound terms
    /// `sigma_M alpha1 ||Q_xi|| + (alpha_tau + eps_eta) ||Q_d||`.
    Full {
        bounds: Bounds,
        budget: UncertaintyBudget,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverSettings {
    /// Boundary-layer width; zero selects the discontinuous sign law.
    pub delta_s: f64,
    /// Cutoff of the equivalent-control low-pass filter, rad/s.
    pub omega_f: f64,
    /// Euler substeps per sample interval.
    pub substeps: usize,
    pub rho_mode: RhoMode,
}

impl Default for ObserverSettings {
    fn default() -> Self {
        ObserverSettings {
            delta_s: 0.05,
            omega_f: 100.0,
            substeps: 20,
            rho_mode: RhoMode::Practical,
        }
    }
}

impl ObserverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_s >= 0.0 && self.delta_s.is_finite()) {
            return Err(SmoError::InvalidConfig(format!(
                "delta_s must be finite and nonnegative, got {}",
                self.delta_s
            )));
        }
        if !(self.omega_f > 0.0 && self.omega_f.is_finite()) {
            return Err(SmoError::InvalidConfig(format!(
                "omega_f must be positive, got {}",
                self.omega_f
            )));
        }
        if self.substeps == 0 {
            return Err(SmoError::InvalidConfig(
                "substeps must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Boundary layer that makes the discrete reaching law deadbeat inside the
/// layer: one substep of `-H K0 v` with `rho = rho0` removes all of `s`.
pub fn deadbeat_boundary_layer(gains: &ObserverGains, dt_sub: f64) -> f64 {
    gains.spec.rho0 * (gains.h_scalar() * gains.k0_scalar()).abs() * dt_sub
}

/// Spectral norms of the switching-gain matrices, computed once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoNorms {
    pub q_xi: f64,
    pub q_d: f64,
}

impl RhoNorms {
    pub fn new(gains: &ObserverGains) -> Self {
        RhoNorms {
            q_xi: spectral_norm(&gains.q_xi),
            q_d: spectral_norm(&gains.q_d),
        }
    }
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

pub fn rho_gain(
    e_zeta: &JointVector,
    xi_hat: &JointVector,
    gains: &ObserverGains,
    norms: &RhoNorms,
    mode: &RhoMode,
) -> f64 {
    let practical =
        gains.spec.rho0 + (&gains.q_zeta * e_zeta).norm() + (&gains.q_xi * xi_hat).norm();
    match mode {
        RhoMode::Practical => practical,
        RhoMode::Full { bounds, budget } => {
            practical
                + bounds.sigma_m * bounds.alpha1 * norms.q_xi
                + (bounds.alpha_tau + budget.eps_eta) * norms.q_d
        }
    }
}

/// `v = -rho s / (||s|| + delta_s)`, with `v = 0` at `s = 0`.
pub fn switching_term(s: &JointVector, rho: f64, delta_s: f64) -> JointVector {
    let norm = s.norm();
    if norm == 0.0 {
        return DVector::zeros(s.len());
    }
    s * (-rho / (norm + delta_s))
}

/// Output-injection terms of one observer evaluation. They depend on the
/// measured `zeta` and the current estimate only.
#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub e_zeta: JointVector,
    pub s: JointVector,
    pub rho: f64,
    pub v: JointVector,
    /// `L1 e_zeta - K0 v`.
    pub upper: JointVector,
    /// `L2 e_zeta - v`.
    pub lower: JointVector,
}

pub fn correction(
    gains: &ObserverGains,
    norms: &RhoNorms,
    settings: &ObserverSettings,
    state: &ObserverState,
    zeta: &JointVector,
) -> Correction {
    let e_zeta = zeta - &state.zeta_hat;
    let s = &gains.h * &e_zeta;
    let rho = rho_gain(&e_zeta, &state.xi_hat, gains, norms, &settings.rho_mode);
    let v = switching_term(&s, rho, settings.delta_s);
    let upper = &gains.l1_m * &e_zeta - &gains.k0 * &v;
    let lower = &gains.l2_m * &e_zeta - &v;
    Correction {
        e_zeta,
        s,
        rho,
        v,
        upper,
        lower,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlidingDiagnostics {
    pub e_zeta: JointVector,
    pub s: JointVector,
    pub s_norm: f64,
    pub rho: f64,
    pub v: JointVector,
    pub in_boundary_layer: bool,
}

/// Measured `zeta` and auxiliary input at both ends of one sample interval.
/// Both are interpolated linearly across the substeps.
#[derive(Debug, Clone, Copy)]
pub struct IntervalSample<'a> {
    pub zeta_start: &'a JointVector,
    pub zeta_end: &'a JointVector,
    pub u_start: &'a AuxiliaryInput,
    pub u_end: &'a AuxiliaryInput,
}

fn euler_substep(
    gains: &ObserverGains,
    norms: &RhoNorms,
    settings: &ObserverSettings,
    state: &mut ObserverState,
    zeta: &JointVector,
    u: &AuxiliaryInput,
    h: f64,
) {
    let c = correction(gains, norms, settings, state, zeta);
    let zeta_dot = &state.xi_hat + &u.upper + &c.upper;
    let xi_dot = &u.lower + &c.lower;
    state.zeta_hat += zeta_dot * h;
    state.xi_hat += xi_dot * h;
    state.v_eq += (&c.v - &state.v_eq) * (h * settings.omega_f);
}

fn check_lengths(n: usize, sample: &IntervalSample<'_>) -> Result<()> {
    check_vector(sample.zeta_start, n, "zeta")?;
    check_vector(sample.zeta_end, n, "zeta")?;
    for u in [sample.u_start, sample.u_end] {
        check_vector(&u.upper, n, "u upper block")?;
        check_vector(&u.lower, n, "u lower block")?;
    }
    Ok(())
}

/// Advances the observer across one sample interval of length `dt`.
///
/// After the call the state estimates time `t_k`, the end of the interval,
/// and the diagnostics are evaluated there. With `substeps = 1` this is the
/// explicit Euler step driven by the sample at the start of the interval.
pub fn smo_step(
    gains: &ObserverGains,
    norms: &RhoNorms,
    settings: &ObserverSettings,
    state: &ObserverState,
    sample: IntervalSample<'_>,
    dt: f64,
    step: usize,
) -> Result<(ObserverState, SlidingDiagnostics)> {
    if !(dt > 0.0) {
        return Err(SmoError::Domain(format!("dt must be positive, got {dt}")));
    }
    check_lengths(gains.spec.n, &sample)?;
    let m = settings.substeps;
    let h = dt / m as f64;
    if h * settings.omega_f > 1.0 {
        return Err(SmoError::InvalidConfig(format!(
            "omega_f * dt per substep is {} > 1; raise substeps",
            h * settings.omega_f
        )));
    }
    let mut next = state.clone();
    for j in 0..m {
        let a = j as f64 / m as f64;
        let zeta = sample.zeta_start.lerp(sample.zeta_end, a);
        let u = sample.u_start.lerp(sample.u_end, a);
        euler_substep(gains, norms, settings, &mut next, &zeta, &u, h);
    }
    if !next.is_sane() {
        return Err(SmoError::ObserverDivergence { step });
    }
    next.d_hat = -&next.v_eq;

    let c = correction(gains, norms, settings, &next, sample.zeta_end);
    let s_norm = c.s.norm();
    let diag = SlidingDiagnostics {
        in_boundary_layer: s_norm <= settings.delta_s,
        e_zeta: c.e_zeta,
        s: c.s,
        s_norm,
        rho: c.rho,
        v: c.v,
    };
    Ok((next, diag))
}

/// `||s0|| / (rho0 lambda_min(P_K))`.
pub fn reaching_time_bound(s0: &JointVector, rho0: f64, p_k: &DMatrix<f64>) -> Result<f64> {
    if !(rho0 > 0.0) {
        return Err(SmoError::Domain(format!(
            "rho0 must be positive, got {rho0}"
        )));
    }
    let lambda_min = p_k.clone().symmetric_eigen().eigenvalues.min();
    if !(lambda_min > 0.0) {
        return Err(SmoError::Domain("P_K must be positive definite".into()));
    }
    Ok(s0.norm() / (rho0 * lambda_min))
}

/// `V = 1/2 s^T P_K^-1 s`.
pub fn sliding_lyapunov(s: &JointVector, p_k_inv: &DMatrix<f64>) -> f64 {
    0.5 * s.dot(&(p_k_inv * s))
}

/// Stateful wrapper that owns the gains, settings and step counter.
#[derive(Debug, Clone)]
pub struct SlidingModeObserver {
    gains: ObserverGains,
    norms: RhoNorms,
    settings: ObserverSettings,
    state: ObserverState,
    step: usize,
}

impl SlidingModeObserver {
    pub fn new(
        gains: ObserverGains,
        settings: ObserverSettings,
        initial: ObserverState,
    ) -> Result<Self> {
        settings.validate()?;
        let n = gains.spec.n;
        check_vector(&initial.zeta_hat, n, "initial zeta estimate")?;
        check_vector(&initial.xi_hat, n, "initial xi estimate")?;
        check_vector(&initial.v_eq, n, "initial filter state")?;
        Ok(SlidingModeObserver {
            norms: RhoNorms::new(&gains),
            gains,
            settings,
            state: initial,
            step: 0,
        })
    }

    pub fn gains(&self) -> &ObserverGains {
        &self.gains
    }

    pub fn settings(&self) -> &ObserverSettings {
        &self.settings
    }

    pub fn state(&self) -> &ObserverState {
        &self.state
    }

    /// Diagnostics at the current estimate for a measured `zeta`.
    pub fn diagnose(&self, zeta: &JointVector) -> SlidingDiagnostics {
        let c = correction(&self.gains, &self.norms, &self.settings, &self.state, zeta);
        let s_norm = c.s.norm();
        SlidingDiagnostics {
            in_boundary_layer: s_norm <= self.settings.delta_s,
            e_zeta: c.e_zeta,
            s: c.s,
            s_norm,
            rho: c.rho,
            v: c.v,
        }
    }

    pub fn step_interval(
        &mut self,
        sample: IntervalSample<'_>,
        dt: f64,
    ) -> Result<SlidingDiagnostics> {
        self.step += 1;
        let (next, diag) = smo_step(
            &self.gains,
            &self.norms,
            &self.settings,
            &self.state,
            sample,
            dt,
            self.step,
        )?;
        self.state = next;
        Ok(diag)
    }

    /// One interval with `zeta` and `u` held constant.
    pub fn step(
        &mut self,
        zeta: &JointVector,
        u: &AuxiliaryInput,
        dt: f64,
    ) -> Result<SlidingDiagnostics> {
        self.step_interval(
            IntervalSample {
                zeta_start: zeta,
                zeta_end: zeta,
                u_start: u,
                u_end: u,
            },
            dt,
        )
    }
}

/// Generalized-momentum residual `r = K_I (p - p0 - int (u_lower + r) dt)`
/// with `p = M^ qbd`, giving `r' = K_I (d - r)`. Measured velocity is fed
/// back through `p`, unlike the sliding-mode observer.
#[derive(Debug, Clone)]
pub struct MomentumObserver {
    k_i: DMatrix<f64>,
    p0: Option<JointVector>,
    integral: JointVector,
    r: JointVector,
}

impl MomentumObserver {
    pub fn new(k_i: DMatrix<f64>) -> Result<Self> {
        let n = k_i.nrows();
        if k_i.ncols() != n || n == 0 {
            return Err(SmoError::Domain("K_I must be square".into()));
        }
        let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || k_i[(i, j)] == 0.0));
        if !diagonal || k_i.diagonal().iter().any(|&k| !(k > 0.0)) {
            return Err(SmoError::Domain("K_I must be diagonal and positive".into()));
        }
        Ok(MomentumObserver {
            k_i,
            p0: None,
            integral: DVector::zeros(n),
            r: DVector::zeros(n),
        })
    }

    pub fn residual(&self) -> &JointVector {
        &self.r
    }

    /// Advances with the momentum `p = M^ qbd` and the lower block of `u`
    /// over the interval ending at this sample.
    pub fn step_momentum(
        &mut self,
        p: &JointVector,
        u_lower: &JointVector,
        dt: f64,
    ) -> Result<&JointVector> {
        let n = self.k_i.nrows();
        check_vector(p, n, "momentum")?;
        check_vector(u_lower, n, "u lower block")?;
        match &self.p0 {
            None => self.p0 = Some(p.clone()),
            Some(p0) => {
                self.integral += (u_lower + &self.r) * dt;
                self.r = &self.k_i * (p - p0 - &self.integral);
            }
        }
        Ok(&self.r)
    }

    pub fn step(
        &mut self,
        identified: &IdentifiedModel,
        q: &JointVector,
        qbd: &JointVector,
        tau: &JointVector,
        mdot: &DMatrix<f64>,
        dt: f64,
    ) -> Result<&JointVector> {
        let p = identified.mass_matrix(q) * qbd;
        let u = compute_u(identified, q, qbd, tau, mdot)?;
        self.step_momentum(&p, &u.lower, dt)
    }
}
