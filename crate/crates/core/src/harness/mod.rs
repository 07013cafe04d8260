//! End-to-end experiments: configuration, the closed-loop run, metrics,
//! CSV export and the invariant campaign behind `smo verify`.

pub mod config;
pub mod export;
pub mod metrics;
pub mod run;
pub mod verify;

pub use config::{
    BoundaryLayer, BoundaryRule, ExperimentConfig, GainSource, ObserverInit, PlantKind,
    RhoModeConfig,
};
pub use export::{export_record, import_record};
pub use metrics::{compute_metrics, Metrics};
pub use run::{
    resolve_delta_s, resolve_gains, run_experiment, run_with_gains, RunRecord, RunStatus,
};
pub use verify::{run_campaign, CheckResult};
