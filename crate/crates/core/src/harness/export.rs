//! CSV export of a run record.
//!
//! Each joint-vector signal goes to `<name>.csv` with columns `t, j1..jn`;
//! the scalar signals share `scalars.csv`. `run.toml` holds the config
//! snapshot, seed, gains and status. Numbers are written in shortest
//! round-trip form, so a re-import reproduces the record exactly and reruns
//! with the same seed produce identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{IdentificationSummary, RunRecord, RunStatus, JOINT_SIGNALS, SCALAR_SIGNALS};
use crate::error::{Result, SmoError};
use crate::synthesis::GainFile;

pub const SIDECAR: &str = "run.toml";
pub const SCALARS: &str = "scalars.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    seed: u64,
    n: usize,
    samples: usize,
    delta_s: f64,
    status: RunStatus,
    identification: IdentificationSummary,
    gains: GainFile,
    config: ExperimentConfig,
}

fn csv_error(path: &Path, e: csv::Error) -> SmoError {
    SmoError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn write_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(|x| format!("{x:?}")))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| SmoError::io(path, e))
}

fn read_csv(path: &Path, columns: usize) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.len() != columns {
        return Err(SmoError::Parse {
            path: path.to_path_buf(),
            message: format!("expected {columns} columns, found {}", header.len()),
        });
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>().map_err(|e| SmoError::Parse {
                    path: path.to_path_buf(),
                    message: format!("bad number {s:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn joint_header(n: usize) -> Vec<String> {
    std::iter::once("t".to_owned())
        .chain((1..=n).map(|j| format!("j{j}")))
        .collect()
}

/// Writes the record into `dir`, creating it if needed, and returns the
/// written paths.
pub fn export_record(record: &RunRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| SmoError::io(dir, e))?;
    let mut written = Vec::new();
    let header = joint_header(record.n);
    for name in JOINT_SIGNALS {
        let series = record.joint_signal(name).expect("known signal");
        let path = dir.join(format!("{name}.csv"));
        let rows = record.t.iter().zip(series).map(|(t, v)| {
            let mut row = Vec::with_capacity(v.len() + 1);
            row.push(*t);
            row.extend(v.iter());
            row
        });
        write_csv(&path, &header, rows)?;
        written.push(path);
    }

    let path = dir.join(SCALARS);
    let header: Vec<String> = std::iter::once("t")
        .chain(SCALAR_SIGNALS)
        .map(str::to_owned)
        .collect();
    let rows = (0..record.len()).map(|k| {
        std::iter::once(record.t[k])
            .chain(
                SCALAR_SIGNALS
                    .iter()
                    .map(|s| record.scalar_signal(s).expect("known signal")[k]),
            )
            .collect()
    });
    write_csv(&path, &header, rows)?;
    written.push(path);

    let sidecar = Sidecar {
        seed: record.seed,
        n: record.n,
        samples: record.len(),
        delta_s: record.delta_s,
        status: record.status.clone(),
        identification: record.identification,
        gains: record.gains.clone(),
        config: record.config.clone(),
    };
    let path = dir.join(SIDECAR);
    let text = toml::to_string(&sidecar).map_err(|e| SmoError::Parse {
        path: path.clone(),
        message: e.to_string(),
    })?;
    fs::write(&path, text).map_err(|e| SmoError::io(&path, e))?;
    written.push(path);
    Ok(written)
}

/// Reads a record written by [`export_record`].
pub fn import_record(dir: &Path) -> Result<RunRecord> {
    let path = dir.join(SIDECAR);
    let text = fs::read_to_string(&path).map_err(|e| SmoError::io(&path, e))?;
    let side: Sidecar = toml::from_str(&text).map_err(|e| SmoError::Parse {
        path: path.clone(),
        message: e.to_string(),
    })?;
    let n = side.n;

    let mut record = RunRecord {
        config: side.config,
        seed: side.seed,
        n,
        status: side.status,
        delta_s: side.delta_s,
        gains: side.gains,
        identification: side.identification,
        t: Vec::new(),
        q: Vec::new(),
        qd: Vec::new(),
        q_meas: Vec::new(),
        qbd: Vec::new(),
        tau: Vec::new(),
        tau_d: Vec::new(),
        zeta: Vec::new(),
        zeta_hat: Vec::new(),
        xi: Vec::new(),
        xi_hat: Vec::new(),
        e_zeta: Vec::new(),
        e_xi: Vec::new(),
        s: Vec::new(),
        v: Vec::new(),
        v_eq: Vec::new(),
        d_hat: Vec::new(),
        r: Vec::new(),
        rho: Vec::new(),
        s_norm: Vec::new(),
    };

    let path = dir.join(SCALARS);
    let (_, rows) = read_csv(&path, 1 + SCALAR_SIGNALS.len())?;
    record.t = rows.iter().map(|r| r[0]).collect();
    for (i, name) in SCALAR_SIGNALS.iter().enumerate() {
        *record.scalar_signal_mut(name).expect("known signal") =
            rows.iter().map(|r| r[i + 1]).collect();
    }

    for name in JOINT_SIGNALS {
        let path = dir.join(format!("{name}.csv"));
        let (_, rows) = read_csv(&path, 1 + n)?;
        if rows.len() != record.t.len() || rows.iter().zip(&record.t).any(|(r, t)| r[0] != *t) {
            return Err(SmoError::Parse {
                path,
                message: "time column disagrees with scalars.csv".into(),
            });
        }
        *record.joint_signal_mut(name).expect("known signal") = rows
            .into_iter()
            .map(|r| DVector::from_column_slice(&r[1..]))
            .collect();
    }
    if record.len() != side.samples {
        return Err(SmoError::Parse {
            path: dir.join(SIDECAR),
            message: format!(
                "sidecar lists {} samples, CSVs hold {}",
                side.samples,
                record.len()
            ),
        });
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DisturbanceKind;
    use crate::harness::config::GainSource;
    use crate::harness::run::run_experiment;

    fn record() -> RunRecord {
        let mut cfg = ExperimentConfig::default();
        cfg.synthesis.source = GainSource::Reference;
        cfg.disturbance.kind = DisturbanceKind::Triangle;
        cfg.disturbance.start = 0.1;
        cfg.disturbance.end = 0.3;
        cfg.sensor.noise_std = 1e-4;
        cfg.run.duration = 0.4;
        run_experiment(&cfg).unwrap()
    }

    #[test]
    fn export_then_import_is_identity() {
        let rec = record();
        let dir = tempfile::tempdir().unwrap();
        export_record(&rec, dir.path()).unwrap();
        let back = import_record(dir.path()).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn joint_csv_has_one_plus_n_columns() {
        let rec = record();
        let dir = tempfile::tempdir().unwrap();
        export_record(&rec, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("d_hat.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,j1,j2");
        assert!(lines.all(|l| l.split(',').count() == 3));
    }

    #[test]
    fn missing_directory_reports_path() {
        let err = import_record(Path::new("/nonexistent/run")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/run"));
    }
}
