//! CSV and JSON persistence of grid results.
//!
//! Floats are written in scientific notation with 17 significant digits so
//! every value reads back bit-identical.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{ExperimentConfig, Method, Model, Noise};
use crate::error::Result;
use crate::grid::{GridOutput, RunRecord, TraceRow};

pub const RUNS_FILE: &str = "runs.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TRACES_FILE: &str = "traces.csv";
pub const METADATA_FILE: &str = "metadata.json";

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

const RUN_HEADER: [&str; 20] = [
    "method",
    "cell",
    "replicate",
    "model",
    "noise",
    "tau",
    "n_total",
    "n_local",
    "m",
    "iterations",
    "seed",
    "l2_error",
    "precision",
    "recall",
    "f1",
    "pqe",
    "runtime_ms",
    "comm_values",
    "converged",
    "error",
];

pub fn write_runs_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    write_runs(fs::File::create(path)?, records)
}

pub fn write_runs<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RUN_HEADER)?;
    for r in records {
        w.write_record([
            r.method.label().to_string(),
            r.cell.to_string(),
            r.replicate.to_string(),
            r.model.label().to_string(),
            r.noise.label().to_string(),
            fmt_f64(r.tau),
            r.n_total.to_string(),
            r.n_local.to_string(),
            r.m.to_string(),
            r.iterations.to_string(),
            r.seed.to_string(),
            fmt_f64(r.l2_error),
            fmt_f64(r.precision),
            fmt_f64(r.recall),
            fmt_f64(r.f1),
            fmt_opt(r.pqe),
            fmt_f64(r.runtime_ms),
            r.comm_values.to_string(),
            r.converged.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_runs_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn write_traces_csv(path: &Path, traces: &[TraceRow]) -> Result<()> {
    write_traces(fs::File::create(path)?, traces)
}

pub fn write_traces<W: Write>(out: W, traces: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method",
        "cell",
        "replicate",
        "seed",
        "t",
        "l2_error",
        "f1",
        "nonzeros",
        "lambda",
        "sweeps",
        "kkt_residual",
        "converged",
    ])?;
    for t in traces {
        w.write_record([
            t.method.label().to_string(),
            t.cell.to_string(),
            t.replicate.to_string(),
            t.seed.to_string(),
            t.t.to_string(),
            fmt_f64(t.l2_error),
            fmt_f64(t.f1),
            t.nonzeros.to_string(),
            fmt_opt(t.lambda),
            t.sweeps.to_string(),
            fmt_f64(t.kkt_residual),
            t.converged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_traces_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Mean, sample sd and median of one metric over the replicates of a cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub cell: usize,
    pub model: Model,
    pub noise: Noise,
    pub tau: f64,
    pub n_total: usize,
    pub n_local: usize,
    pub metric: &'static str,
    /// Replicates with a finite value.
    pub count: usize,
    /// Replicates in the cell, finite or not.
    pub replicates: usize,
    pub mean: f64,
    /// Zero for a single replicate.
    pub sd: f64,
    pub median: f64,
}

pub const SUMMARY_METRICS: [&str; 7] = [
    "l2_error",
    "precision",
    "recall",
    "f1",
    "pqe",
    "runtime_ms",
    "comm_values",
];

fn metric(r: &RunRecord, name: &str) -> f64 {
    match name {
        "l2_error" => r.l2_error,
        "precision" => r.precision,
        "recall" => r.recall,
        "f1" => r.f1,
        "pqe" => r.pqe.unwrap_or(f64::NAN),
        "runtime_ms" => r.runtime_ms,
        "comm_values" => r.comm_values as f64,
        _ => f64::NAN,
    }
}

/// Mean, sample sd (0 for fewer than two values) and median; NaN when
/// `values` is empty.
pub fn describe(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    (mean, sd, median)
}

/// Groups records by (method, cell) and describes every metric.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(usize, Method), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.cell, r.method)).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((cell, method), rs) in groups {
        let first = rs[0];
        for name in SUMMARY_METRICS {
            let values: Vec<f64> = rs
                .iter()
                .map(|r| metric(r, name))
                .filter(|v| v.is_finite())
                .collect();
            let (mean, sd, median) = describe(&values);
            out.push(SummaryRow {
                method,
                cell,
                model: first.model,
                noise: first.noise,
                tau: first.tau,
                n_total: first.n_total,
                n_local: first.n_local,
                metric: name,
                count: values.len(),
                replicates: rs.len(),
                mean,
                sd,
                median,
            });
        }
    }
    out
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_summary(fs::File::create(path)?, rows)
}

pub fn write_summary<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method",
        "cell",
        "model",
        "noise",
        "tau",
        "n_total",
        "n_local",
        "metric",
        "count",
        "replicates",
        "mean",
        "sd",
        "median",
    ])?;
    for s in rows {
        w.write_record([
            s.method.label().to_string(),
            s.cell.to_string(),
            s.model.label().to_string(),
            s.noise.label().to_string(),
            fmt_f64(s.tau),
            s.n_total.to_string(),
            s.n_local.to_string(),
            s.metric.to_string(),
            s.count.to_string(),
            s.replicates.to_string(),
            fmt_f64(s.mean),
            fmt_f64(s.sd),
            fmt_f64(s.median),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Metadata<'a> {
    pub config: &'a ExperimentConfig,
    pub rng: &'static str,
    pub code_version: &'static str,
    pub parallel: bool,
    pub threads: usize,
    pub runs: usize,
    pub failed_runs: usize,
    pub wall_clock_s: f64,
}

pub fn write_metadata(path: &Path, meta: &Metadata<'_>) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

/// Writes the four output files into `dir`, creating it if needed.
pub fn write_all(
    dir: &Path,
    cfg: &ExperimentConfig,
    out: &GridOutput,
    wall_clock_s: f64,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let paths: Vec<PathBuf> = [RUNS_FILE, SUMMARY_FILE, TRACES_FILE, METADATA_FILE]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    write_runs_csv(&paths[0], &out.records)?;
    write_summary_csv(&paths[1], &summarize(&out.records))?;
    write_traces_csv(&paths[2], &out.traces)?;
    let meta = Metadata {
        config: cfg,
        rng: dhsqr::datagen::RNG_ALGORITHM,
        code_version: env!("CARGO_PKG_VERSION"),
        parallel: cfg!(feature = "parallel"),
        threads: crate::grid::pool_size(cfg),
        runs: out.records.len(),
        failed_runs: out.records.iter().filter(|r| r.error.is_some()).count(),
        wall_clock_s,
    };
    write_metadata(&paths[3], &meta)?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, 2.5e-300, -7.0, f64::MAX] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let digits = s
                .split('e')
                .next()
                .unwrap()
                .chars()
                .filter(|c| c.is_ascii_digit())
                .count();
            assert_eq!(digits, 17, "{s}");
        }
        assert!(fmt_f64(f64::NAN).parse::<f64>().unwrap().is_nan());
    }

    #[test]
    fn describe_matches_hand_values() {
        let (mean, sd, median) = describe(&[1.0, 2.0, 4.0, 5.0]);
        assert_eq!(mean, 3.0);
        assert!((sd - (10.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(median, 3.0);
        assert_eq!(describe(&[0.7]), (0.7, 0.0, 0.7));
        assert!(describe(&[]).0.is_nan());
    }
}
