//! Observer gain synthesis.
//!
//! The Luenberger gain `L = P^-1 W` comes from the LMI
//! `[[Lambda, P E], [E^T P, -gamma^2 I]] < 0`, `P > 0`, with
//! `Lambda = P (kappa I + A) + (kappa I + A)^T P + I - W C - C^T W^T`.
//! Every block of `P` and `W` is a scalar multiple of the identity, so the
//! whole problem reduces to one 3x3 matrix in `(p11, p12, p22, w1, w2)`.

mod eig;
mod gainfile;
mod solver;

use nalgebra::{Complex, DMatrix, Matrix2, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SmoError};
use crate::linearization::LinearSystem;

pub use eig::{monic_quadratic_roots, sym2_eigenvalues, sym3_eigenvalues};
pub use gainfile::{read_gain_file, write_gain_file, GainFile};
pub use solver::{
    feasibility_sweep, inner_minimize, solve_lmi, synthesize, InnerSolution, LmiSolution,
    SolverOptions, SweepPoint, SynthesisOutcome,
};

/// Design targets: decay-rate floor `kappa`, disturbance attenuation `gamma`,
/// reaching gain `rho0` and boundary-layer width `delta_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisSpec {
    pub n: usize,
    pub kappa: f64,
    pub gamma: f64,
    pub rho0: f64,
    pub delta_s: f64,
}

impl SynthesisSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n > 0
            && self.kappa > 0.0
            && self.gamma > 0.0
            && self.rho0 > 0.0
            && self.delta_s >= 0.0
            && [self.kappa, self.gamma, self.rho0, self.delta_s]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(SmoError::Domain(format!(
                "synthesis spec needs n > 0, kappa, gamma, rho0 > 0 and delta_s >= 0: {self:?}"
            )))
        }
    }
}

/// Scalar blocks of `P = [[p11 I, p12 I], [p12 I, p22 I]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovBlocks {
    pub n: usize,
    pub p11: f64,
    pub p12: f64,
    pub p22: f64,
}

impl LyapunovBlocks {
    pub fn new(n: usize, p11: f64, p12: f64, p22: f64) -> Self {
        LyapunovBlocks { n, p11, p12, p22 }
    }

    /// The blocks reported with the reference 7-DoF experiment.
    pub fn reference() -> Self {
        LyapunovBlocks::new(7, 24.55, -1.227, 0.0718)
    }

    pub fn with_dof(self, n: usize) -> Self {
        LyapunovBlocks { n, ..self }
    }

    pub fn per_joint(&self) -> Matrix2<f64> {
        Matrix2::new(self.p11, self.p12, self.p12, self.p22)
    }

    pub fn dense(&self) -> DMatrix<f64> {
        kron_identity(
            &DMatrix::from_row_slice(2, 2, self.per_joint().as_slice()),
            self.n,
        )
    }

    /// `W = P L` for `L = [l1 I; l2 I]`.
    pub fn w_for(&self, l1: f64, l2: f64) -> (f64, f64) {
        (self.p11 * l1 + self.p12 * l2, self.p12 * l1 + self.p22 * l2)
    }

    /// `L = P^-1 W`.
    pub fn l_for(&self, w1: f64, w2: f64) -> Result<(f64, f64)> {
        let inv = self
            .per_joint()
            .try_inverse()
            .ok_or_else(|| SmoError::Synthesis("P is singular".into()))?;
        let l = inv * nalgebra::Vector2::new(w1, w2);
        Ok((l[0], l[1]))
    }
}

/// Per-joint scalar block `b` expanded to `b ⊗ I_n` with joint-major blocks.
pub(crate) fn kron_identity(b: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(b.nrows() * n, b.ncols() * n);
    for i in 0..b.nrows() {
        for j in 0..b.ncols() {
            for k in 0..n {
                out[(i * n + k, j * n + k)] = b[(i, j)];
            }
        }
    }
    out
}

/// Per-joint LMI matrix for `P`, `W` and `(kappa, gamma)`.
pub fn lmi_matrix(p: &LyapunovBlocks, w1: f64, w2: f64, kappa: f64, gamma: f64) -> Matrix3<f64> {
    let m11 = 2.0 * kappa * p.p11 + 1.0 - 2.0 * w1;
    let m12 = 2.0 * kappa * p.p12 + p.p11 - w2;
    let m22 = 2.0 * kappa * p.p22 + 2.0 * p.p12 + 1.0;
    Matrix3::new(
        m11,
        m12,
        p.p12, //
        m12,
        m22,
        p.p22, //
        p.p12,
        p.p22,
        -gamma * gamma,
    )
}

/// Dense `3n x 3n` LMI matrix assembled from the matrix definitions of
/// `A`, `C`, `E`, with `W = [w1 I; w2 I]`.
pub fn lmi_matrix_dense(
    p: &LyapunovBlocks,
    w1: f64,
    w2: f64,
    kappa: f64,
    gamma: f64,
) -> DMatrix<f64> {
    let n = p.n;
    let sys = LinearSystem::new(n);
    let pm = p.dense();
    let shifted = sys.a() + DMatrix::identity(2 * n, 2 * n) * kappa;
    let mut w = DMatrix::zeros(2 * n, n);
    w.view_mut((0, 0), (n, n)).fill_diagonal(w1);
    w.view_mut((n, 0), (n, n)).fill_diagonal(w2);
    let wc = &w * sys.c();
    let lambda = &pm * &shifted + shifted.transpose() * &pm + DMatrix::identity(2 * n, 2 * n)
        - &wc
        - wc.transpose();
    let pe = &pm * sys.e();
    let mut out = DMatrix::zeros(3 * n, 3 * n);
    out.view_mut((0, 0), (2 * n, 2 * n)).copy_from(&lambda);
    out.view_mut((0, 2 * n), (2 * n, n)).copy_from(&pe);
    out.view_mut((2 * n, 0), (n, 2 * n))
        .copy_from(&pe.transpose());
    out.view_mut((2 * n, 2 * n), (n, n))
        .fill_diagonal(-gamma * gamma);
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmiReport {
    pub max_eig: f64,
    pub p_min_eig: f64,
    pub feasible: bool,
}

/// Largest eigenvalue of the LMI matrix and smallest eigenvalue of `P`.
/// One joint uses the per-joint 3x3 block; larger `n` assembles the dense
/// matrix. Both go through the symmetric eigensolver, since the closed form
/// loses absolute accuracy when the entries are large.
pub fn check_lmi_feasible(
    p: &LyapunovBlocks,
    w1: f64,
    w2: f64,
    kappa: f64,
    gamma: f64,
) -> LmiReport {
    let (max_eig, p_min_eig) = if p.n == 1 {
        (
            lmi_matrix(p, w1, w2, kappa, gamma)
                .symmetric_eigenvalues()
                .max(),
            p.per_joint().symmetric_eigenvalues().min(),
        )
    } else {
        (
            lmi_matrix_dense(p, w1, w2, kappa, gamma)
                .symmetric_eigenvalues()
                .max(),
            p.dense().symmetric_eigenvalues().min(),
        )
    };
    LmiReport {
        max_eig,
        p_min_eig,
        feasible: max_eig < 0.0 && p_min_eig > 0.0,
    }
}

/// Full gain set for the sliding-mode observer.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverGains {
    pub spec: SynthesisSpec,
    pub blocks: LyapunovBlocks,
    pub l1: f64,
    pub l2: f64,
    pub l1_m: DMatrix<f64>,
    pub l2_m: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub k0: DMatrix<f64>,
    /// `K = [K0; I]`.
    pub k: DMatrix<f64>,
    pub p_k: DMatrix<f64>,
    pub q_zeta: DMatrix<f64>,
    pub q_xi: DMatrix<f64>,
    pub q_d: DMatrix<f64>,
}

impl ObserverGains {
    /// Per-joint sliding-surface gain.
    pub fn h_scalar(&self) -> f64 {
        self.h[(0, 0)]
    }

    pub fn k0_scalar(&self) -> f64 {
        self.k0[(0, 0)]
    }

    pub fn a_l(&self) -> DMatrix<f64> {
        let n = self.spec.n;
        let sys = LinearSystem::new(n);
        let mut l = DMatrix::zeros(2 * n, n);
        l.view_mut((0, 0), (n, n)).copy_from(&self.l1_m);
        l.view_mut((n, 0), (n, n)).copy_from(&self.l2_m);
        sys.a() - l * sys.c()
    }

    /// `K^T P`, which equals `[H, 0]` for consistent gains.
    pub fn kt_p(&self) -> DMatrix<f64> {
        self.k.transpose() * self.blocks.dense()
    }
}

/// Derives `H`, `K0`, `K`, `P_K` and the switching-gain matrices from `P` and `L`.
pub fn derive_smo_gains(
    blocks: &LyapunovBlocks,
    l1: f64,
    l2: f64,
    spec: &SynthesisSpec,
) -> Result<ObserverGains> {
    let n = spec.n;
    let blocks = blocks.with_dof(n);
    if !(blocks.p12.abs() > 1e-12 * blocks.p11.abs().max(blocks.p22.abs()).max(1e-300)) {
        return Err(SmoError::Synthesis("P12 is singular".into()));
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let p11 = &eye * blocks.p11;
    let p12 = &eye * blocks.p12;
    let p22 = &eye * blocks.p22;
    let p12_inv = p12
        .clone()
        .try_inverse()
        .ok_or_else(|| SmoError::Synthesis("P12 is singular".into()))?;

    let h = -(&p22 * &p12_inv * &p11) + p12.transpose();
    let k0 = -(p12_inv.transpose() * &p22);
    let mut k = DMatrix::zeros(2 * n, n);
    k.view_mut((0, 0), (n, n)).copy_from(&k0);
    k.view_mut((n, 0), (n, n)).copy_from(&eye);

    let p_k = &p22 * &p12_inv * &p11 * p12_inv.transpose() * &p22 - &p22;
    let p = blocks.dense();
    let kt_p = k.transpose() * &p;
    let direct = &kt_p * &k;
    let scale = p_k.amax().max(1e-300);
    if (&direct - &p_k).amax() > 1e-9 * scale {
        return Err(SmoError::Synthesis(
            "K^T P K disagrees with the block formula".into(),
        ));
    }
    let kt_p_scale = kt_p.amax().max(1e-300);
    if (kt_p.view((0, 0), (n, n)) - &h).amax() > 1e-9 * kt_p_scale
        || kt_p.view((0, n), (n, n)).amax() > 1e-9 * kt_p_scale
    {
        return Err(SmoError::Synthesis("K^T P differs from [H 0]".into()));
    }
    let p_k_inv = p_k
        .clone()
        .cholesky()
        .ok_or_else(|| SmoError::Synthesis("P_K is not positive definite".into()))?
        .inverse();

    let l1_m = &eye * l1;
    let l2_m = &eye * l2;
    let mut a_l_left = DMatrix::zeros(2 * n, n);
    a_l_left.view_mut((0, 0), (n, n)).copy_from(&(-&l1_m));
    a_l_left.view_mut((n, 0), (n, n)).copy_from(&(-&l2_m));
    let mut a_l_right = DMatrix::zeros(2 * n, n);
    a_l_right.view_mut((0, 0), (n, n)).copy_from(&eye);
    let e = LinearSystem::new(n).e();

    let q_zeta = &p_k_inv * &kt_p * a_l_left;
    let q_xi = &p_k_inv * &kt_p * a_l_right;
    let q_d = &p_k_inv * &kt_p * e;

    Ok(ObserverGains {
        spec: *spec,
        blocks,
        l1,
        l2,
        l1_m,
        l2_m,
        h,
        k0,
        k,
        p_k,
        q_zeta,
        q_xi,
        q_d,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenReport {
    pub eigenvalues: [Complex<f64>; 2],
    pub passed: bool,
}

/// Eigenvalues of the per-joint block `[[-l1, 1], [-l2, 0]]`; passes when
/// every real part lies left of `-kappa`.
pub fn verify_eigenvalues(l1: f64, l2: f64, kappa: f64) -> EigenReport {
    let eigenvalues = monic_quadratic_roots(l1, l2);
    EigenReport {
        eigenvalues,
        passed: eigenvalues.iter().all(|z| z.re < -kappa),
    }
}

/// Largest singular value of `(j w I - A_L)^-1 E` for one joint:
/// `sqrt(1 + w^2 + l1^2) / |l2 - w^2 + j l1 w|`.
pub fn hinf_gain_at(l1: f64, l2: f64, omega: f64) -> f64 {
    let den = Complex::new(l2 - omega * omega, l1 * omega).norm();
    (1.0 + omega * omega + l1 * l1).sqrt() / den
}

/// Same quantity from a dense complex solve and SVD over all `n` joints.
pub fn hinf_gain_dense(l1_m: &DMatrix<f64>, l2_m: &DMatrix<f64>, omega: f64) -> f64 {
    let n = l1_m.nrows();
    let sys = LinearSystem::new(n);
    let mut l = DMatrix::zeros(2 * n, n);
    l.view_mut((0, 0), (n, n)).copy_from(l1_m);
    l.view_mut((n, 0), (n, n)).copy_from(l2_m);
    let a_l = sys.a() - l * sys.c();
    let jw = DMatrix::<Complex<f64>>::identity(2 * n, 2 * n) * Complex::new(0.0, omega);
    let m = jw - a_l.map(|x| Complex::new(x, 0.0));
    let e = sys.e().map(|x| Complex::new(x, 0.0));
    match m.lu().solve(&e) {
        Some(g) => g.singular_values().max(),
        None => f64::INFINITY,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HinfReport {
    pub sup_gain: f64,
    pub at_omega: f64,
    pub passed: bool,
}

/// Supremum of the disturbance-to-error gain over `omega_grid`; passes when
/// it stays below `gamma`.
pub fn verify_hinf(l1: f64, l2: f64, gamma: f64, omega_grid: &[f64]) -> HinfReport {
    let (sup_gain, at_omega) = omega_grid
        .iter()
        .map(|&w| (hinf_gain_at(l1, l2, w), w))
        .fold(
            (0.0, 0.0),
            |best, cur| if cur.0 > best.0 { cur } else { best },
        );
    HinfReport {
        sup_gain,
        at_omega,
        passed: sup_gain < gamma,
    }
}

/// `count` logarithmically spaced points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && count >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Default sweep grid: `[1e-2, 1e4]` rad/s, 200 points.
pub fn default_omega_grid() -> Vec<f64> {
    log_grid(1e-2, 1e4, 200)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchurCheck {
    pub name: &'static str,
    pub value: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchurReport {
    pub checks: Vec<SchurCheck>,
}

impl SchurReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&SchurCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// `P11 > 0`, `P22 > 0`, `P22 - P12^T P11^-1 P12 > 0`, `P12` Hurwitz and
/// `-P12 - P12^T - I > 0`, each reported with the governing eigenvalue.
pub fn schur_checks(p: &LyapunovBlocks) -> SchurReport {
    let schur = if p.p11 != 0.0 {
        p.p22 - p.p12 * p.p12 / p.p11
    } else {
        f64::NAN
    };
    let strengthened = -2.0 * p.p12 - 1.0;
    let checks = vec![
        SchurCheck {
            name: "p11_positive",
            value: p.p11,
            passed: p.p11 > 0.0,
        },
        SchurCheck {
            name: "p22_positive",
            value: p.p22,
            passed: p.p22 > 0.0,
        },
        SchurCheck {
            name: "schur_complement_positive",
            value: schur,
            passed: schur > 0.0,
        },
        SchurCheck {
            name: "p12_hurwitz",
            value: p.p12,
            passed: p.p12 < 0.0,
        },
        SchurCheck {
            name: "strengthened_p12",
            value: strengthened,
            passed: strengthened > 0.0,
        },
    ];
    SchurReport { checks }
}
