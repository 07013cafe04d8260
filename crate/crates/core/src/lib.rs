//! Sliding-mode unknown-input observer for estimating external joint torques
//! of Euler-Lagrange systems without inverting the inertia matrix and without
//! feeding measured velocity back into the observer.
//!
//! The crate is split along the estimation pipeline:
//!
//! * [`dynamics`] simulates the rigid-body plant, the tracking controller,
//!   disturbance profiles and sampled measurements.
//! * [`linearization`] maps sampled robot data to the linear unknown-input
//!   model `x' = A x + u + E d`, `zeta = C x`.
//! * [`synthesis`] solves the observer LMI and derives every gain.
//! * [`observer`] runs the sliding-mode observer and a momentum-observer baseline.
//! * [`harness`] configures, runs, records and scores closed-loop experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod harness;
pub mod linearization;
pub mod observer;
pub mod synthesis;

pub use dynamics::{
    Bounds, DisturbanceKind, DisturbanceProfile, ErrorFactors, IdentifiedModel, JointVector,
    RobotModel, SimState,
};
pub use error::{Result, SmoError};
pub use harness::{ExperimentConfig, Metrics, RunRecord};

pub use linearization::{AuxiliaryInput, LinearState, LinearSystem, UncertaintyBudget};

pub use observer::{
    MomentumObserver, ObserverSettings, ObserverState, RhoMode, SlidingDiagnostics,
    SlidingModeObserver,
};
pub use synthesis::{LyapunovBlocks, ObserverGains, SynthesisSpec};
