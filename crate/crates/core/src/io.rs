//! CSV and JSON writers. Reals are written with 17 significant digits so
//! every value round-trips exactly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fusion::EstimateResult;
use crate::harness::{Aggregate, ExperimentReport, ReportRow};
use crate::model::{PathStats, SensorPaths};
use crate::trigger::MessageLog;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub fn real(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn opt_real(v: Option<f64>) -> String {
    v.map(real).unwrap_or_default()
}

/// First 12 hex digits of the SHA-256 of `cfg` serialized as JSON, with any
/// `master_seed` field removed so that seeds only enter the file name once.
pub fn config_hash<T: Serialize>(cfg: &T) -> Result<String, IoError> {
    fn strip(v: &mut serde_json::Value) {
        match v {
            serde_json::Value::Object(map) => {
                map.remove("master_seed");
                map.values_mut().for_each(strip);
            }
            serde_json::Value::Array(items) => items.iter_mut().for_each(strip),
            _ => {}
        }
    }
    let mut value = serde_json::to_value(cfg)?;
    strip(&mut value);
    let digest = Sha256::digest(serde_json::to_vec(&value)?);
    Ok(digest.iter().take(6).map(|b| format!("{b:02x}")).collect())
}

pub fn output_name(kind: &str, hash: &str, seed: u64, ext: &str) -> String {
    format!("{kind}-{hash}-{seed}.{ext}")
}

pub fn write_rows<W: Write>(w: W, rows: &[ReportRow]) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "replication",
        "estimator",
        "point",
        "h",
        "value",
        "error",
        "standardized",
        "stop_time",
        "info_used",
        "oracle_info",
        "oracle_score",
        "messages",
        "mean_overshoot",
        "overshoot_count",
        "failure",
    ])?;
    for r in rows {
        let messages = r.messages.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(";");
        out.write_record([
            r.replication.to_string(),
            r.estimator.to_string(),
            real(r.point),
            opt_real(r.h),
            real(r.value),
            real(r.error),
            real(r.standardized),
            opt_real(r.stop_time),
            real(r.info_used),
            real(r.oracle_info),
            real(r.oracle_score),
            messages,
            opt_real(r.mean_overshoot),
            r.overshoot_count.to_string(),
            r.failure.clone().unwrap_or_default(),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_aggregates<W: Write>(w: W, aggs: &[Aggregate]) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "estimator",
        "point",
        "h",
        "n",
        "failures",
        "mean",
        "variance",
        "bias",
        "std_mean",
        "std_variance",
        "ks_d",
        "ks_p_value",
        "messages_per_time",
        "mean_overshoot",
        "overshoot_stderr",
    ])?;
    for a in aggs {
        out.write_record([
            a.estimator.to_string(),
            real(a.point),
            opt_real(a.h),
            a.n.to_string(),
            a.failures.to_string(),
            real(a.mean),
            real(a.variance),
            real(a.bias),
            real(a.std_mean),
            real(a.std_variance),
            opt_real(a.ks_d),
            opt_real(a.ks_p_value),
            real(a.messages_per_time),
            opt_real(a.mean_overshoot),
            opt_real(a.overshoot_stderr),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `t, Y_1..Y_K, B, A, M` on the simulation grid.
pub fn write_paths<W: Write>(w: W, paths: &SensorPaths, stats: &PathStats) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string()];
    header.extend((1..=stats.k).map(|i| format!("y_{i}")));
    header.extend(["b", "a", "m"].map(String::from));
    out.write_record(&header)?;
    for (s, t) in paths.grid.times().enumerate() {
        let mut rec = vec![real(t)];
        rec.extend(paths.y.iter().map(|y| real(y[s])));
        rec.extend([real(stats.b[s]), real(stats.a[s]), real(stats.m[s])]);
        out.write_record(&rec)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// One line per message: `sensor, kind (b|a), time, bit, overshoot`.
pub fn write_messages<W: Write>(w: W, log: &MessageLog) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["sensor", "kind", "time", "bit", "overshoot"])?;
    for (i, s) in log.sensors.iter().enumerate() {
        for m in &s.b {
            out.write_record([i.to_string(), "b".into(), real(m.time), m.bit.to_string(), real(m.overshoot)])?;
        }
        for m in &s.a {
            out.write_record([i.to_string(), "a".into(), real(m.time), String::new(), String::new()])?;
        }
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_density<W: Write>(w: W, table: &[(f64, f64, f64)]) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "p_up", "p_down"])?;
    for &(t, up, down) in table {
        out.write_record([real(t), real(up), real(down)])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// One line per `(point, result)`: `point` is the horizon or information target.
pub fn write_estimates<W: Write>(w: W, results: &[(f64, EstimateResult)]) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["estimator", "point", "value", "stop_time", "info_used", "messages_used"])?;
    for (point, r) in results {
        out.write_record([
            r.estimator.to_string(),
            real(*point),
            real(r.value),
            opt_real(r.stop_time),
            real(r.info_used),
            r.messages_used.to_string(),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a> {
    config_hash: &'a str,
    master_seed: u64,
    n_rows: usize,
    n_failures: usize,
    aggregates: &'a [Aggregate],
}

pub fn summary_json(report: &ExperimentReport, hash: &str) -> Result<String, IoError> {
    Ok(serde_json::to_string_pretty(&Summary {
        config_hash: hash,
        master_seed: report.config.master_seed,
        n_rows: report.rows.len(),
        n_failures: report.failures().count(),
        aggregates: &report.aggregates,
    })?)
}

/// Creates `dir` and writes `bytes` to `dir/name`, returning the full path.
pub fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, IoError> {
    let wrap = |path: &Path| {
        let path = path.to_path_buf();
        move |source| IoError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(wrap(dir))?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(wrap(&path))?;
    Ok(path)
}

/// Writes rows, aggregates and summary for a report; returns the paths written.
pub fn write_report(dir: &Path, report: &ExperimentReport) -> Result<Vec<PathBuf>, IoError> {
    let hash = config_hash(&report.config)?;
    let seed = report.config.master_seed;
    let mut rows = Vec::new();
    write_rows(&mut rows, &report.rows)?;
    let mut aggs = Vec::new();
    write_aggregates(&mut aggs, &report.aggregates)?;
    Ok(vec![
        write_file(dir, &output_name("report", &hash, seed, "csv"), &rows)?,
        write_file(dir, &output_name("aggregates", &hash, seed, "csv"), &aggs)?,
        write_file(dir, &output_name("summary", &hash, seed, "json"), summary_json(report, &hash)?.as_bytes())?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::EstimatorKind;
    use crate::harness::{run_experiment, ExperimentConfig, PowerLaw, Regime};
    use crate::model::ModelSpec;

    fn cfg(seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            model: ModelSpec::brownian(vec![1.0, 2.0]),
            lambda_true: 0.5,
            regime: Regime::FixedHorizon {
                t_list: vec![20.0],
                delta_rule: PowerLaw { a: 1.0, b: 0.25 },
            },
            n_replications: 3,
            master_seed: seed,
            estimators: vec![EstimatorKind::CentralizedFixed, EstimatorKind::DecentralizedFixed],
            steps_per_unit: 20.0,
            max_extensions: 4,
        }
    }

    #[test]
    fn reals_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, f64::MAX] {
            assert_eq!(real(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(real(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn hash_ignores_seed_only() {
        let a = config_hash(&cfg(1)).unwrap();
        assert_eq!(a.len(), 12);
        assert_eq!(a, config_hash(&cfg(2)).unwrap());
        let mut other = cfg(1);
        other.lambda_true = 0.6;
        assert_ne!(a, config_hash(&other).unwrap());
        assert_eq!(output_name("report", &a, 7, "csv"), format!("report-{a}-7.csv"));
    }

    #[test]
    fn report_files_written_and_parsable() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_experiment(&cfg(5)).unwrap();
        let paths = write_report(dir.path(), &report).unwrap();
        assert_eq!(paths.len(), 3);
        assert!(paths.iter().all(|p| p.starts_with(dir.path())));
        let mut rdr = csv::Reader::from_path(&paths[0]).unwrap();
        let values: Vec<f64> = rdr
            .records()
            .map(|r| r.unwrap()[4].parse::<f64>().unwrap())
            .collect();
        let expected: Vec<f64> = report.rows.iter().map(|r| r.value).collect();
        assert_eq!(values, expected);
        let json: serde_json::Value = serde_json::from_slice(&fs::read(&paths[2]).unwrap()).unwrap();
        assert_eq!(json["n_rows"], 6);
    }
}
