//! Structured LMI solver.
//!
//! For a fixed Luenberger gain `L = (l1, l2)` the LMI is affine in
//! `P = (p11, p12, p22)` (with `W = P L`), so the smallest achievable maximum
//! eigenvalue is a convex problem in three variables. The outer search looks
//! for the least aggressive `L` (smallest spectral radius of `A_L`) whose inner
//! optimum certifies feasibility with a margin. Minimizing the maximum
//! eigenvalue jointly over all five scalars is avoided because it drives `L`
//! to the edge of any search box.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use super::{
    check_lmi_feasible, derive_smo_gains, sym2_eigenvalues, LyapunovBlocks, ObserverGains,
    SynthesisSpec,
};
use crate::error::{Result, SmoError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub l1_range: (f64, f64),
    pub l2_range: (f64, f64),
    /// Coarse grid size in `(l1, l2)`, log-spaced.
    pub grid: (usize, usize),
    /// Required certificate margin as a fraction of `min(gamma^2, 1)`.
    pub margin: f64,
    /// Final step of the local refinement in log-gain units.
    pub refine_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            l1_range: (1e-1, 1e4),
            l2_range: (1e-1, 1e7),
            grid: (40, 56),
            margin: 1e-2,
            refine_tol: 1e-4,
        }
    }
}

impl SolverOptions {
    fn margin_for(&self, gamma: f64) -> f64 {
        self.margin * (gamma * gamma).min(1.0)
    }
}

/// Inner optimum of the maximum LMI eigenvalue over `P` for a fixed `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSolution {
    pub p: [f64; 3],
    pub max_eig: f64,
    pub p_min_eig: f64,
    /// Largest entry of the LMI matrix, the scale of its rounding error.
    pub scale: f64,
}

impl InnerSolution {
    /// Positive unless both `M < 0` and `P > 0` hold.
    pub fn certificate(&self) -> f64 {
        self.max_eig.max(-self.p_min_eig)
    }

    /// `M < -margin` with the margin also covering eigenvalue rounding.
    pub fn certified(&self, margin: f64) -> bool {
        self.max_eig < -margin.max(1e-12 * self.scale) && self.p_min_eig > 0.0
    }
}

/// Certified solution of the LMI.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmiSolution {
    pub blocks: LyapunovBlocks,
    pub l1: f64,
    pub l2: f64,
    pub w1: f64,
    pub w2: f64,
    pub max_eig: f64,
    pub p_min_eig: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthesisOutcome {
    Feasible(LmiSolution),
    Infeasible {
        kappa: f64,
        gamma: f64,
        best_max_eig: f64,
        best_l: (f64, f64),
    },
}

impl SynthesisOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, SynthesisOutcome::Feasible(_))
    }
}

struct Affine {
    m0: Matrix3<f64>,
    basis: [Matrix3<f64>; 3],
}

impl Affine {
    fn new(kappa: f64, gamma: f64, l1: f64, l2: f64) -> Self {
        let m0 = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -gamma * gamma);
        let a11 = Matrix3::new(
            2.0 * kappa - 2.0 * l1,
            1.0,
            0.0, //
            1.0,
            0.0,
            0.0, //
            0.0,
            0.0,
            0.0,
        );
        let a12 = Matrix3::new(
            -2.0 * l2,
            2.0 * kappa - l1,
            1.0, //
            2.0 * kappa - l1,
            2.0,
            0.0, //
            1.0,
            0.0,
            0.0,
        );
        let a22 = Matrix3::new(
            0.0,
            -l2,
            0.0, //
            -l2,
            2.0 * kappa,
            1.0, //
            0.0,
            1.0,
            0.0,
        );
        Affine {
            m0,
            basis: [a11, a12, a22],
        }
    }

    fn at(&self, p: &[f64; 3]) -> Matrix3<f64> {
        self.m0 + self.basis[0] * p[0] + self.basis[1] * p[1] + self.basis[2] * p[2]
    }

    /// Backward-stable eigensolver, bounded below by the largest diagonal
    /// entry. The closed-form 3x3 formula loses absolute accuracy once the
    /// entries grow large relative to `gamma^2`.
    fn max_eig(&self, p: &[f64; 3]) -> f64 {
        let m = self.at(p);
        let diag = m.diagonal().max();
        m.symmetric_eigenvalues().max().max(diag)
    }

    /// Log-sum-exp smoothing of the spectrum, `lambda_max <= f <= lambda_max + mu ln 3`,
    /// and its gradient in `p`.
    fn smoothed(&self, p: &[f64; 3], mu: f64) -> (f64, Vector3<f64>) {
        let eig = self.at(p).symmetric_eigen();
        let lmax = eig.eigenvalues.max();
        let w = eig.eigenvalues.map(|l| ((l - lmax) / mu).exp());
        let z = w.sum();
        let f = lmax + mu * z.ln();
        let mut g = Vector3::zeros();
        for i in 0..3 {
            let v = eig.eigenvectors.column(i);
            let wi = w[i] / z;
            for j in 0..3 {
                g[j] += wi * v.dot(&(self.basis[j] * v));
            }
        }
        (f, g)
    }
}

/// `kappa I + A_L` is Hurwitz, a necessary condition for feasibility.
fn shifted_hurwitz(kappa: f64, l1: f64, l2: f64) -> bool {
    2.0 * kappa - l1 < 0.0 && kappa * (kappa - l1) + l2 > 0.0
}

/// Solution of `At^T P + P At = -I` for `At = [[kappa - l1, 1], [-l2, kappa]]`.
fn lyapunov_start(kappa: f64, l1: f64, l2: f64) -> Option<[f64; 3]> {
    let sys = Matrix3::new(
        2.0 * (kappa - l1),
        -2.0 * l2,
        0.0, //
        1.0,
        2.0 * kappa - l1,
        -l2, //
        0.0,
        2.0,
        2.0 * kappa,
    );
    let sol = sys.lu().solve(&Vector3::new(-1.0, 0.0, -1.0))?;
    Some([sol[0], sol[1], sol[2]])
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Minimizes the maximum eigenvalue of the LMI over `P` with `W = P L`.
pub fn inner_minimize(
    kappa: f64,
    gamma: f64,
    l1: f64,
    l2: f64,
    warm: Option<[f64; 3]>,
) -> InnerSolution {
    let aff = Affine::new(kappa, gamma, l1, l2);
    let finish = |p: [f64; 3]| InnerSolution {
        p,
        max_eig: aff.max_eig(&p),
        p_min_eig: sym2_eigenvalues(&nalgebra::Matrix2::new(p[0], p[1], p[1], p[2]))[0],
        scale: aff.at(&p).amax(),
    };
    let lyap = if shifted_hurwitz(kappa, l1, l2) {
        lyapunov_start(kappa, l1, l2)
    } else {
        None
    };
    let Some(base) = lyap else {
        return finish(warm.unwrap_or([1.0, 0.0, 1.0]));
    };

    let scaled = |c: f64| [c * base[0], c * base[1], c * base[2]];
    let log_c = golden_min(|lc| aff.max_eig(&scaled(lc.exp())), -12.0, 16.0, 80);
    let mut start = scaled(log_c.exp());
    if let Some(w) = warm {
        if aff.max_eig(&w) < aff.max_eig(&start) {
            start = w;
        }
    }

    let mag = start.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let s = Vector3::from_iterator(start.iter().map(|v| v.abs().max(1e-6 * mag)));
    let to_p = |y: &Vector3<f64>| [s[0] * y[0], s[1] * y[1], s[2] * y[2]];

    let mut y = Vector3::from_iterator((0..3).map(|i| start[i] / s[i]));
    let mut best = start;
    let mut best_val = aff.max_eig(&start);
    let mut mu = 0.1 * best_val.abs().max(gamma * gamma).max(1e-6);

    for _level in 0..8 {
        let eval = |y: &Vector3<f64>| {
            let (f, g) = aff.smoothed(&to_p(y), mu);
            (f, g.component_mul(&s))
        };
        let (mut f, mut g) = eval(&y);
        let mut hinv = Matrix3::<f64>::identity();
        let mut stalls = 0;
        for _ in 0..300 {
            if g.amax() < 1e-13 {
                break;
            }
            let mut dir = -(hinv * g);
            if dir.dot(&g) >= 0.0 {
                hinv = Matrix3::identity();
                dir = -g;
            }
            let slope = dir.dot(&g);
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let cand = y + dir * step;
                let (fc, gc) = eval(&cand);
                if fc.is_finite() && fc <= f + 1e-4 * step * slope {
                    accepted = Some((cand, fc, gc));
                    break;
                }
                step *= 0.5;
            }
            let Some((y_new, f_new, g_new)) = accepted else {
                if hinv != Matrix3::identity() {
                    hinv = Matrix3::identity();
                    continue;
                }
                break;
            };
            let sk = y_new - y;
            let gk = g_new - g;
            let sy = sk.dot(&gk);
            if sy > 1e-300 {
                let rho = 1.0 / sy;
                let eye = Matrix3::<f64>::identity();
                let left = eye - sk * gk.transpose() * rho;
                hinv = left * hinv * left.transpose() + sk * sk.transpose() * rho;
            }
            stalls = if (f - f_new).abs() <= 1e-15 * (1.0 + f.abs()) {
                stalls + 1
            } else {
                0
            };
            y = y_new;
            f = f_new;
            g = g_new;
            let p = to_p(&y);
            let exact = aff.max_eig(&p);
            if exact < best_val {
                best_val = exact;
                best = p;
            }
            if stalls >= 3 {
                break;
            }
        }
        mu *= 0.1;
    }
    finish(best)
}

fn spectral_radius(l1: f64, l2: f64) -> f64 {
    super::monic_quadratic_roots(l1, l2)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Lexicographic preference: smaller spectral radius, then smaller gains.
fn preferred(a: (f64, f64), b: (f64, f64)) -> bool {
    let (ra, rb) = (spectral_radius(a.0, a.1), spectral_radius(b.0, b.1));
    if ra < rb * (1.0 - 1e-12) {
        true
    } else if ra <= rb * (1.0 + 1e-12) {
        a.0 + a.1 < b.0 + b.1
    } else {
        false
    }
}

/// Solves the LMI for `spec.kappa`, `spec.gamma`. Infeasibility is returned
/// as a value carrying the best certificate found.
pub fn solve_lmi(spec: &SynthesisSpec, opts: &SolverOptions) -> Result<SynthesisOutcome> {
    spec.validate()?;
    let (kappa, gamma) = (spec.kappa, spec.gamma);
    let margin = opts.margin_for(gamma);
    let feasible = |s: &InnerSolution| s.certified(margin);

    let l1_grid = super::log_grid(opts.l1_range.0, opts.l1_range.1, opts.grid.0);
    let l2_grid = super::log_grid(opts.l2_range.0, opts.l2_range.1, opts.grid.1);
    let mut candidates: Vec<(usize, usize)> = (0..l1_grid.len())
        .flat_map(|i| (0..l2_grid.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| shifted_hurwitz(kappa, l1_grid[i], l2_grid[j]))
        .collect();
    candidates.sort_by(|&(i, j), &(a, b)| {
        spectral_radius(l1_grid[i], l2_grid[j])
            .total_cmp(&spectral_radius(l1_grid[a], l2_grid[b]))
            .then((i, j).cmp(&(a, b)))
    });

    let mut best_cert = (f64::INFINITY, (f64::NAN, f64::NAN));
    let mut found = None;
    for batch in candidates.chunks(64) {
        let solved: Vec<InnerSolution> = batch
            .par_iter()
            .map(|&(i, j)| inner_minimize(kappa, gamma, l1_grid[i], l2_grid[j], None))
            .collect();
        for (&(i, j), sol) in batch.iter().zip(solved.iter()) {
            if sol.certificate() < best_cert.0 {
                best_cert = (sol.certificate(), (l1_grid[i], l2_grid[j]));
            }
            if found.is_none() && feasible(sol) {
                found = Some(((l1_grid[i], l2_grid[j]), *sol));
            }
        }
        if found.is_some() {
            break;
        }
    }

    let Some((mut cur, mut cur_sol)) = found else {
        if !best_cert.0.is_finite() {
            let l1 = opts.l1_range.1;
            let l2 = (0.25 * l1 * l1).clamp(opts.l2_range.0, opts.l2_range.1);
            let sol = inner_minimize(kappa, gamma, l1, l2, None);
            best_cert = (sol.certificate(), (l1, l2));
        }
        return Ok(SynthesisOutcome::Infeasible {
            kappa,
            gamma,
            best_max_eig: best_cert.0,
            best_l: best_cert.1,
        });
    };

    let (lo1, hi1) = (opts.l1_range.0.ln(), opts.l1_range.1.ln());
    let (lo2, hi2) = (opts.l2_range.0.ln(), opts.l2_range.1.ln());
    let mut h =
        ((hi1 - lo1) / (opts.grid.0 - 1) as f64).min((hi2 - lo2) / (opts.grid.1 - 1) as f64);
    const DIRS: [(f64, f64); 8] = [
        (0.0, -1.0),
        (-1.0, 0.0),
        (-1.0, -1.0),
        (1.0, -1.0),
        (-1.0, 1.0),
        (1.0, 0.0),
        (0.0, 1.0),
        (1.0, 1.0),
    ];
    while h > opts.refine_tol {
        let mut moved = false;
        for (du, dw) in DIRS {
            let u = cur.0.ln() + h * du;
            let w = cur.1.ln() + h * dw;
            if u < lo1 || u > hi1 || w < lo2 || w > hi2 {
                continue;
            }
            let cand = (u.exp(), w.exp());
            if !shifted_hurwitz(kappa, cand.0, cand.1) || !preferred(cand, cur) {
                continue;
            }
            let sol = inner_minimize(kappa, gamma, cand.0, cand.1, Some(cur_sol.p));
            if feasible(&sol) {
                cur = cand;
                cur_sol = sol;
                moved = true;
                break;
            }
        }
        if !moved {
            h *= 0.5;
        }
    }

    let blocks = LyapunovBlocks::new(spec.n, cur_sol.p[0], cur_sol.p[1], cur_sol.p[2]);
    let (w1, w2) = blocks.w_for(cur.0, cur.1);
    let report = check_lmi_feasible(&blocks.with_dof(1), w1, w2, kappa, gamma);
    if !report.feasible {
        return Err(SmoError::Synthesis(format!(
            "certificate failed at L = {cur:?}: max eigenvalue {:.3e}",
            report.max_eig
        )));
    }
    Ok(SynthesisOutcome::Feasible(LmiSolution {
        blocks,
        l1: cur.0,
        l2: cur.1,
        w1,
        w2,
        max_eig: report.max_eig,
        p_min_eig: report.p_min_eig,
    }))
}

/// Solves the LMI and derives the observer gains.
pub fn synthesize(spec: &SynthesisSpec, opts: &SolverOptions) -> Result<ObserverGains> {
    match solve_lmi(spec, opts)? {
        SynthesisOutcome::Feasible(sol) => derive_smo_gains(&sol.blocks, sol.l1, sol.l2, spec),
        SynthesisOutcome::Infeasible {
            kappa,
            gamma,
            best_max_eig,
            ..
        } => Err(SmoError::Infeasible {
            kappa,
            gamma,
            best_max_eig,
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub kappa: f64,
    pub gamma: f64,
    pub feasible: bool,
    /// Certified max eigenvalue when feasible, best certificate otherwise.
    pub max_eig: f64,
    pub l1: f64,
    pub l2: f64,
    pub k0: f64,
    pub h: f64,
}

/// Feasibility over a `(kappa, gamma)` grid, row-major in `kappas`.
pub fn feasibility_sweep(
    base: &SynthesisSpec,
    kappas: &[f64],
    gammas: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<SweepPoint>> {
    let points: Vec<(f64, f64)> = kappas
        .iter()
        .flat_map(|&k| gammas.iter().map(move |&g| (k, g)))
        .collect();
    points
        .par_iter()
        .map(|&(kappa, gamma)| {
            let spec = SynthesisSpec {
                kappa,
                gamma,
                ..*base
            };
            Ok(match solve_lmi(&spec, opts)? {
                SynthesisOutcome::Feasible(sol) => {
                    let g = derive_smo_gains(&sol.blocks, sol.l1, sol.l2, &spec)?;
                    SweepPoint {
                        kappa,
                        gamma,
                        feasible: true,
                        max_eig: sol.max_eig,
                        l1: sol.l1,
                        l2: sol.l2,
                        k0: g.k0_scalar(),
                        h: g.h_scalar(),
                    }
                }
                SynthesisOutcome::Infeasible {
                    best_max_eig,
                    best_l,
                    ..
                } => SweepPoint {
                    kappa,
                    gamma,
                    feasible: false,
                    max_eig: best_max_eig,
                    l1: best_l.0,
                    l2: best_l.1,
                    k0: f64::NAN,
                    h: f64::NAN,
                },
            })
        })
        .collect()
}
