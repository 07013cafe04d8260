use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::run::RunRecord;
use crate::dynamics::{Bounds, IdentifiedModel};
use crate::error::{Result, SmoError};
use crate::linearization::{sup_dm_estimate, uncertainty_budget};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Scored window `[start, end]`, s.
    pub window: (f64, f64),
    /// `RMSE(d^, tau_d)` per joint over the window, N·m.
    pub rmse: Vec<f64>,
    /// RMSE over all joints and samples of the window.
    pub rmse_total: f64,
    /// Per-joint RMSE divided by that joint's peak `|tau_d|`; NaN for idle joints.
    pub rmse_relative: Vec<f64>,
    pub peak_error: Vec<f64>,
    pub baseline_rmse: Vec<f64>,
    /// First time `||s|| <= delta_s` holds for the sustain count; NaN if never.
    pub reaching_time: f64,
    /// `||s(0)|| / (rho0 lambda_min(P_K))`.
    pub reaching_bound: f64,
    pub reached_within_bound: bool,
    /// Fraction of post-reach samples with `||s|| <= delta_s`.
    pub confinement: f64,
    /// `max ||d^||` over the window.
    pub max_d_hat: f64,
    pub noise_floor: f64,
    /// 5% to 95% rise time of `d^` per joint after the disturbance starts;
    /// NaN when not reached inside the disturbance window.
    pub rise_time: Vec<f64>,
}

fn window_start(record: &RunRecord) -> usize {
    let t0 = record.config.metrics.transient_end;
    record
        .t
        .iter()
        .position(|&t| t >= t0 - 1e-12)
        .unwrap_or(record.len())
}

fn rmse_per_joint(a: &[DVector<f64>], b: &[DVector<f64>], n: usize) -> Vec<f64> {
    let mut acc = vec![0.0; n];
    for (x, y) in a.iter().zip(b) {
        for j in 0..n {
            acc[j] += (x[j] - y[j]).powi(2);
        }
    }
    let len = a.len().max(1) as f64;
    acc.into_iter().map(|s| (s / len).sqrt()).collect()
}

/// First index from which `||s|| <= delta_s` holds for `sustain` samples.
pub fn reaching_index(s_norm: &[f64], delta_s: f64, sustain: usize) -> Option<usize> {
    let sustain = sustain.max(1);
    let mut run = 0;
    for (i, &s) in s_norm.iter().enumerate() {
        if s <= delta_s {
            run += 1;
            if run == sustain {
                return Some(i + 1 - sustain);
            }
        } else {
            run = 0;
        }
    }
    None
}

/// 5% to 95% rise time of `y` toward `target` from index `from`, stopping at `to`.
pub fn rise_time(t: &[f64], y: &[f64], target: f64, from: usize, to: usize) -> Option<f64> {
    if target == 0.0 {
        return None;
    }
    let to = to.min(y.len());
    let frac = |i: usize| y[i] / target;
    let t5 = (from..to).find(|&i| frac(i) >= 0.05)?;
    let t95 = (t5..to).find(|&i| frac(i) >= 0.95)?;
    Some(t[t95] - t[t5])
}

/// Bounds measured from the record over `[from, end]` plus the identification
/// errors and the model's inertia bound.
pub fn estimate_bounds(record: &RunRecord, identified: &IdentifiedModel, from: usize) -> Bounds {
    let dt = record.config.run.dt;
    let mut b = Bounds {
        eps_m: identified.eps_m,
        eps_n: identified.eps_n,
        eps_g: identified.eps_g,
        eps_f: identified.eps_f,
        sigma_m: identified.base.sigma_m(),
        ..Default::default()
    };
    for k in from.max(1)..record.len() {
        b.alpha1 = b.alpha1.max(record.qd[k].norm());
        b.alpha2 = b
            .alpha2
            .max(((&record.qd[k] - &record.qd[k - 1]) / dt).norm());
        b.alpha_tau = b.alpha_tau.max(record.tau_d[k].norm());
        b.eps_qd = b.eps_qd.max((&record.qbd[k] - &record.qd[k]).norm());
    }
    b
}

/// Identified model reconstructed from the record's configuration and factors.
pub fn identified_model(record: &RunRecord) -> IdentifiedModel {
    IdentifiedModel::new(
        record.config.plant.build(),
        record.identification.factors,
        record.config.identification.velocity_range,
    )
}

/// `eps_eta + ||L2|| delta_s / sigma_min(H)`: the model-error bound plus the
/// largest estimate offset a sliding variable confined to the layer allows.
pub fn noise_floor(record: &RunRecord, delta_s: f64) -> Result<f64> {
    if let Some(f) = record.config.metrics.noise_floor {
        return Ok(f);
    }
    let identified = identified_model(record);
    let bounds = match record.config.bounds {
        Some(b) => b,
        None => estimate_bounds(record, &identified, window_start(record)),
    };
    let budget = uncertainty_budget(&bounds, sup_dm_estimate(&identified, 500, 17))?;
    let g = &record.gains;
    Ok(budget.eps_eta + g.luenberger.l2.abs() * delta_s / g.derived.h.abs())
}

pub fn compute_metrics(record: &RunRecord, delta_s: f64) -> Result<Metrics> {
    if record.is_empty() {
        return Err(SmoError::Domain("empty run record".into()));
    }
    let n = record.n;
    let from = window_start(record);
    let end = record.len();
    let (d_hat, tau_d) = (&record.d_hat[from..end], &record.tau_d[from..end]);

    let rmse = rmse_per_joint(d_hat, tau_d, n);
    let rmse_total = (rmse.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt();
    let peak_tau: Vec<f64> = (0..n)
        .map(|j| record.tau_d.iter().fold(0.0f64, |m, v| m.max(v[j].abs())))
        .collect();
    let rmse_relative = rmse
        .iter()
        .zip(&peak_tau)
        .map(|(r, p)| if *p > 0.0 { r / p } else { f64::NAN })
        .collect();
    let peak_error = (0..n)
        .map(|j| {
            d_hat
                .iter()
                .zip(tau_d)
                .fold(0.0f64, |m, (a, b)| m.max((a[j] - b[j]).abs()))
        })
        .collect();
    let baseline_rmse = rmse_per_joint(&record.r[from..end], tau_d, n);

    let sustain = record.config.metrics.sustain_steps;
    let reach = reaching_index(&record.s_norm, delta_s, sustain);
    let reaching_time = reach.map_or(f64::NAN, |i| record.t[i]);
    let g = &record.gains;
    let reaching_bound = record.s[0].norm() / (g.spec.rho0 * g.derived.p_k);
    let reached_within_bound = reach.is_some() && reaching_time <= reaching_bound;
    let confinement = match reach {
        Some(i) => {
            let post = &record.s_norm[i..];
            post.iter().filter(|&&s| s <= delta_s).count() as f64 / post.len() as f64
        }
        None => 0.0,
    };
    let max_d_hat = d_hat.iter().fold(0.0f64, |m, v| m.max(v.norm()));

    let dist = &record.config.disturbance;
    let start = record
        .t
        .iter()
        .position(|&t| t >= dist.start)
        .unwrap_or(end);
    let stop = record.t.iter().position(|&t| t > dist.end).unwrap_or(end);
    let amplitude = dist.amplitude(n);
    let rise = (0..n)
        .map(|j| {
            let y: Vec<f64> = record.d_hat.iter().map(|v| v[j]).collect();
            rise_time(&record.t, &y, amplitude[j], start, stop).unwrap_or(f64::NAN)
        })
        .collect();

    Ok(Metrics {
        window: (record.t[from.min(end - 1)], record.t[end - 1]),
        rmse,
        rmse_total,
        rmse_relative,
        peak_error,
        baseline_rmse,
        reaching_time,
        reaching_bound,
        reached_within_bound,
        confinement,
        max_d_hat,
        noise_floor: noise_floor(record, delta_s)?,
        rise_time: rise,
    })
}

impl Metrics {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("metrics serialize")
    }
}
