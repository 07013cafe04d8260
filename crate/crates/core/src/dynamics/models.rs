use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Planar two-link arm moving in a vertical plane. Joint angles are measured
/// from the horizontal, so `q = 0` is the stretched-out pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLinkArm {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub l2: f64,
    /// Distance from each joint to the link's center of mass.
    pub lc1: f64,
    pub lc2: f64,
    /// Link inertias about the center of mass.
    pub i1: f64,
    pub i2: f64,
    pub gravity: f64,
    pub damping: [f64; 2],
}

impl Default for TwoLinkArm {
    fn default() -> Self {
        let (m1, m2, l1, l2) = (1.2, 1.0, 0.4, 0.35);
        TwoLinkArm {
            m1,
            m2,
            l1,
            l2,
            lc1: l1 / 2.0,
            lc2: l2 / 2.0,
            i1: m1 * l1 * l1 / 12.0,
            i2: m2 * l2 * l2 / 12.0,
            gravity: 9.81,
            damping: [0.1, 0.08],
        }
    }
}

impl TwoLinkArm {
    pub fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let c2 = q[1].cos();
        let a = self.m1 * self.lc1 * self.lc1
            + self.i1
            + self.m2 * (self.l1 * self.l1 + self.lc2 * self.lc2)
            + self.i2;
        let b = self.m2 * self.l1 * self.lc2;
        let d = self.m2 * self.lc2 * self.lc2 + self.i2;
        DMatrix::from_row_slice(2, 2, &[a + 2.0 * b * c2, d + b * c2, d + b * c2, d])
    }

    pub fn mass_matrix_partials(&self, q: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let s2 = q[1].sin();
        let b = self.m2 * self.l1 * self.lc2;
        vec![
            DMatrix::zeros(2, 2),
            DMatrix::from_row_slice(2, 2, &[-2.0 * b * s2, -b * s2, -b * s2, 0.0]),
        ]
    }

    pub fn coriolis(&self, q: &DVector<f64>, qd: &DVector<f64>) -> DVector<f64> {
        let h = -self.m2 * self.l1 * self.lc2 * q[1].sin();
        DVector::from_vec(vec![
            h * (2.0 * qd[0] * qd[1] + qd[1] * qd[1]),
            -h * qd[0] * qd[0],
        ])
    }

    pub fn gravity_torque(&self, q: &DVector<f64>) -> DVector<f64> {
        let g = self.gravity;
        let c1 = q[0].cos();
        let c12 = (q[0] + q[1]).cos();
        DVector::from_vec(vec![
            (self.m1 * self.lc1 + self.m2 * self.l1) * g * c1 + self.m2 * self.lc2 * g * c12,
            self.m2 * self.lc2 * g * c12,
        ])
    }

    pub fn potential_energy(&self, q: &DVector<f64>) -> f64 {
        let g = self.gravity;
        (self.m1 * self.lc1 + self.m2 * self.l1) * g * q[0].sin()
            + self.m2 * self.lc2 * g * (q[0] + q[1]).sin()
    }
}

/// Point mass on a massless rod, angle measured from the downward vertical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pendulum {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub damping: f64,
}

impl Pendulum {
    /// Gravity-free unit inertia: a pure double integrator.
    pub fn unit_inertia() -> Self {
        Pendulum {
            mass: 1.0,
            length: 1.0,
            gravity: 0.0,
            damping: 0.0,
        }
    }

    pub fn inertia(&self) -> f64 {
        self.mass * self.length * self.length
    }
}

/// Abstract n-DoF model with configuration-dependent inertia
/// `M(q) = B + sum_k c_k cos(q_k) u_k u_k^T`, gravity `G_i = g_i sin(q_i)` and
/// Coriolis terms from the Christoffel symbols of `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticArm {
    pub base: Vec<f64>,
    pub coupling: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub gravity: Vec<f64>,
    pub damping: Vec<f64>,
}

impl SyntheticArm {
    /// Deterministic n-DoF instance with inertia shrinking toward the wrist.
    /// The perturbation weights are capped at half the smallest base inertia,
    /// which keeps `M(q)` positive definite for every `q`.
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "synthetic arm needs at least one joint");
        let base: Vec<f64> = (0..n).map(|i| 1.5 / (1.0 + 0.6 * i as f64)).collect();
        let b_min = base.iter().cloned().fold(f64::INFINITY, f64::min);
        let coupling: Vec<Vec<f64>> = (0..n)
            .map(|k| {
                (0..n)
                    .map(|j| 1.0 / (1.0 + (j as f64 - k as f64).abs()))
                    .collect()
            })
            .collect();
        let weights = coupling
            .iter()
            .map(|u| {
                let norm_sq: f64 = u.iter().map(|x| x * x).sum();
                0.5 * b_min / (n as f64 * norm_sq)
            })
            .collect();
        let gravity = (0..n).map(|i| 6.0 / (1.0 + i as f64)).collect();
        let damping = vec![0.1; n];
        SyntheticArm {
            base,
            coupling,
            weights,
            gravity,
            damping,
        }
    }

    pub fn dof(&self) -> usize {
        self.base.len()
    }

    fn outer(&self, k: usize) -> DMatrix<f64> {
        let u = DVector::from_column_slice(&self.coupling[k]);
        &u * u.transpose()
    }

    pub fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::from_diagonal(&DVector::from_column_slice(&self.base));
        for k in 0..self.dof() {
            m += self.outer(k) * (self.weights[k] * q[k].cos());
        }
        m
    }

    pub fn mass_matrix_partials(&self, q: &DVector<f64>) -> Vec<DMatrix<f64>> {
        (0..self.dof())
            .map(|k| self.outer(k) * (-self.weights[k] * q[k].sin()))
            .collect()
    }

    pub fn gravity_torque(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.dof(),
            self.gravity
                .iter()
                .zip(q.iter())
                .map(|(g, qi)| g * qi.sin()),
        )
    }

    pub fn potential_energy(&self, q: &DVector<f64>) -> f64 {
        self.gravity
            .iter()
            .zip(q.iter())
            .map(|(g, qi)| -g * qi.cos())
            .sum()
    }
}

/// Coriolis/centrifugal vector from inertia partials:
/// `N = Mdot qd - 1/2 [qd^T dM/dq_i qd]_i`.
pub fn christoffel_coriolis(partials: &[DMatrix<f64>], qd: &DVector<f64>) -> DVector<f64> {
    let n = qd.len();
    let mut mdot = DMatrix::zeros(n, n);
    for (k, dm) in partials.iter().enumerate() {
        mdot += dm * qd[k];
    }
    let mut out = &mdot * qd;
    for (i, dm) in partials.iter().enumerate() {
        out[i] -= 0.5 * qd.dot(&(dm * qd));
    }
    out
}
