//! Linear unknown-input model of the robot in momentum coordinates.
//!
//! With `zeta = M^(q) q` and `xi = M^(q) q'`, the sampled plant satisfies
//! `x' = A x + u + E d`, `zeta = C x`, where `x = [zeta; xi]`,
//! `A = [[0, I], [0, 0]]`, `C = [I, 0]`, `E = [0; I]`, and `d` lumps the
//! external torque with model error. No inverse of the inertia matrix appears.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{check_vector, IdentifiedModel, JointVector};
use crate::error::{Result, SmoError};

/// `x = [zeta; xi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearState {
    pub zeta: JointVector,
    pub xi: JointVector,
}

impl LinearState {
    pub fn from_plant(m_hat: &DMatrix<f64>, q: &JointVector, qd: &JointVector) -> Self {
        LinearState {
            zeta: m_hat * q,
            xi: m_hat * qd,
        }
    }

    pub fn stacked(&self) -> DVector<f64> {
        let n = self.zeta.len();
        DVector::from_fn(
            2 * n,
            |i, _| if i < n { self.zeta[i] } else { self.xi[i - n] },
        )
    }
}

/// Canonical `(A, C, E)` of dimension `n`. The matrices are identity/zero
/// blocks; dense forms are built only for structural checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearSystem {
    pub n: usize,
}

impl LinearSystem {
    pub fn new(n: usize) -> Self {
        LinearSystem { n }
    }

    pub fn a(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        a.view_mut((0, n), (n, n)).fill_with_identity();
        a
    }

    pub fn c(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut c = DMatrix::zeros(n, 2 * n);
        c.view_mut((0, 0), (n, n)).fill_with_identity();
        c
    }

    pub fn e(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut e = DMatrix::zeros(2 * n, n);
        e.view_mut((n, 0), (n, n)).fill_with_identity();
        e
    }

    /// `A x` without forming `A`: `[xi; 0]`.
    pub fn apply_a(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        DVector::from_fn(2 * n, |i, _| if i < n { x[n + i] } else { 0.0 })
    }

    /// Rank of `[C; C A]`.
    pub fn observability_rank(&self) -> usize {
        let c = self.c();
        let ca = &c * self.a();
        let mut o = DMatrix::zeros(2 * self.n, 2 * self.n);
        o.view_mut((0, 0), (self.n, 2 * self.n)).copy_from(&c);
        o.view_mut((self.n, 0), (self.n, 2 * self.n)).copy_from(&ca);
        o.rank(1e-9)
    }

    /// Rank of `[E, A E]`.
    pub fn controllability_rank(&self) -> usize {
        let e = self.e();
        let ae = self.a() * &e;
        let mut k = DMatrix::zeros(2 * self.n, 2 * self.n);
        k.view_mut((0, 0), (2 * self.n, self.n)).copy_from(&e);
        k.view_mut((0, self.n), (2 * self.n, self.n)).copy_from(&ae);
        k.rank(1e-9)
    }

    pub fn ce(&self) -> DMatrix<f64> {
        self.c() * self.e()
    }
}

/// `u = [Mdot q; tau + Mdot qbd - N^(q, qbd) - G^(q) - F^(qbd)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryInput {
    pub upper: JointVector,
    pub lower: JointVector,
}

impl AuxiliaryInput {
    pub fn zeros(n: usize) -> Self {
        AuxiliaryInput {
            upper: DVector::zeros(n),
            lower: DVector::zeros(n),
        }
    }

    pub fn stacked(&self) -> DVector<f64> {
        LinearState {
            zeta: self.upper.clone(),
            xi: self.lower.clone(),
        }
        .stacked()
    }

    /// `(1 - a) self + a other`.
    pub fn lerp(&self, other: &AuxiliaryInput, a: f64) -> AuxiliaryInput {
        AuxiliaryInput {
            upper: self.upper.lerp(&other.upper, a),
            lower: self.lower.lerp(&other.lower, a),
        }
    }
}

pub fn compute_zeta(m_hat: &DMatrix<f64>, q: &JointVector) -> JointVector {
    m_hat * q
}

/// Backward difference of the identified inertia.
pub fn compute_mdot(m_k: &DMatrix<f64>, m_prev: &DMatrix<f64>, dt: f64) -> Result<DMatrix<f64>> {
    if !(dt > 0.0) {
        return Err(SmoError::Domain(format!("dt must be positive, got {dt}")));
    }
    Ok((m_k - m_prev) / dt)
}

pub fn compute_u(
    identified: &IdentifiedModel,
    q: &JointVector,
    qbd: &JointVector,
    tau: &JointVector,
    mdot: &DMatrix<f64>,
) -> Result<AuxiliaryInput> {
    let n = identified.dof();
    check_vector(q, n, "q")?;
    check_vector(qbd, n, "measured velocity")?;
    check_vector(tau, n, "tau")?;
    let lower = tau + mdot * qbd
        - identified.coriolis(q, qbd)
        - identified.gravity(q)
        - identified.friction(qbd);
    Ok(AuxiliaryInput {
        upper: mdot * q,
        lower,
    })
}

/// Lumped model-error bound `eps_eta` and the resulting bound on `||d||`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UncertaintyBudget {
    pub velocity_term: f64,
    pub inertia_term: f64,
    pub eps_n: f64,
    pub eps_g: f64,
    pub eps_f: f64,
    pub eps_eta: f64,
    pub d_bound: f64,
}

/// `eps_eta = eps_qd alpha1 sup||dM^/dq|| + eps_M alpha2 + eps_N + eps_G + eps_F`.
pub fn uncertainty_budget(
    bounds: &crate::dynamics::Bounds,
    sup_dm: f64,
) -> Result<UncertaintyBudget> {
    bounds.validate()?;
    if !(sup_dm >= 0.0) {
        return Err(SmoError::Domain("sup ||dM/dq|| must be nonnegative".into()));
    }
    let velocity_term = bounds.eps_qd * bounds.alpha1 * sup_dm;
    let inertia_term = bounds.eps_m * bounds.alpha2;
    let eps_eta = velocity_term + inertia_term + bounds.eps_n + bounds.eps_g + bounds.eps_f;
    Ok(UncertaintyBudget {
        velocity_term,
        inertia_term,
        eps_n: bounds.eps_n,
        eps_g: bounds.eps_g,
        eps_f: bounds.eps_f,
        eps_eta,
        d_bound: bounds.alpha_tau + eps_eta,
    })
}

/// Sampled estimate of `sup_q sqrt(sum_k ||dM^/dq_k||_2^2)` by central
/// differences. The root-sum-square form bounds `||(dM^/dq . v) w||` by
/// `||v|| ||w||` times the returned value.
pub fn sup_dm_estimate(identified: &IdentifiedModel, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    let mut sup: f64 = 0.0;
    for _ in 0..samples {
        let q = identified.base.sample_configuration(&mut rng);
        let mut total = 0.0;
        for k in 0..q.len() {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[k] += h;
            qm[k] -= h;
            let dm = (identified.mass_matrix(&qp) - identified.mass_matrix(&qm)) / (2.0 * h);
            let norm = crate::dynamics::spectral_norm_sym(&dm);
            total += norm * norm;
        }
        sup = sup.max(total.sqrt());
    }
    sup
}
