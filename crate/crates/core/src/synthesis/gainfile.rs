//! Plain-text gain file.
//!
//! ```toml
//! [spec]        # n, kappa, gamma, rho0, delta_s
//! [lyapunov]    # p11, p12, p22 (per-joint scalar blocks of P)
//! [luenberger]  # l1, l2 and w1, w2 = P [l1; l2]
//! [derived]     # h, k0, p_k, q_zeta, q_xi, q_d (per-joint scalars)
//! ```
//!
//! The `[derived]` section is informational: loading recomputes every gain
//! from `[lyapunov]` and `[luenberger]` and rejects files whose derived values
//! disagree.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{derive_smo_gains, LyapunovBlocks, ObserverGains, SynthesisSpec};
use crate::error::{Result, SmoError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainFile {
    pub spec: SynthesisSpec,
    pub lyapunov: LyapunovSection,
    pub luenberger: LuenbergerSection,
    pub derived: DerivedSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovSection {
    pub p11: f64,
    pub p12: f64,
    pub p22: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LuenbergerSection {
    pub l1: f64,
    pub l2: f64,
    pub w1: f64,
    pub w2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivedSection {
    pub h: f64,
    pub k0: f64,
    pub p_k: f64,
    pub q_zeta: f64,
    pub q_xi: f64,
    pub q_d: f64,
}

impl GainFile {
    pub fn from_gains(g: &ObserverGains) -> Self {
        let (w1, w2) = g.blocks.w_for(g.l1, g.l2);
        GainFile {
            spec: g.spec,
            lyapunov: LyapunovSection {
                p11: g.blocks.p11,
                p12: g.blocks.p12,
                p22: g.blocks.p22,
            },
            luenberger: LuenbergerSection {
                l1: g.l1,
                l2: g.l2,
                w1,
                w2,
            },
            derived: DerivedSection {
                h: g.h_scalar(),
                k0: g.k0_scalar(),
                p_k: g.p_k[(0, 0)],
                q_zeta: g.q_zeta[(0, 0)],
                q_xi: g.q_xi[(0, 0)],
                q_d: g.q_d[(0, 0)],
            },
        }
    }

    pub fn to_gains(&self) -> Result<ObserverGains> {
        let blocks = LyapunovBlocks::new(
            self.spec.n,
            self.lyapunov.p11,
            self.lyapunov.p12,
            self.lyapunov.p22,
        );
        let g = derive_smo_gains(&blocks, self.luenberger.l1, self.luenberger.l2, &self.spec)?;
        let fresh = GainFile::from_gains(&g).derived;
        let stored = self.derived;
        let pairs = [
            ("h", fresh.h, stored.h),
            ("k0", fresh.k0, stored.k0),
            ("p_k", fresh.p_k, stored.p_k),
            ("q_zeta", fresh.q_zeta, stored.q_zeta),
            ("q_xi", fresh.q_xi, stored.q_xi),
            ("q_d", fresh.q_d, stored.q_d),
        ];
        for (name, a, b) in pairs {
            if (a - b).abs() > 1e-9 * a.abs().max(b.abs()).max(1e-12) {
                return Err(SmoError::Synthesis(format!(
                    "gain file field derived.{name} = {b} disagrees with recomputed {a}"
                )));
            }
        }
        Ok(g)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("gain file serializes")
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

pub fn write_gain_file(path: &Path, gains: &ObserverGains) -> Result<()> {
    std::fs::write(path, GainFile::from_gains(gains).to_toml()).map_err(|e| SmoError::io(path, e))
}

pub fn read_gain_file(path: &Path) -> Result<ObserverGains> {
    let text = std::fs::read_to_string(path).map_err(|e| SmoError::io(path, e))?;
    let file = GainFile::from_toml(&text).map_err(|e| SmoError::Parse {
        path: path.into(),
        message: e.to_string(),
    })?;
    file.spec.validate()?;
    file.to_gains()
}
