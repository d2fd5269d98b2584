//! Table rows, the report container, and CSV/JSON output.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use crate::config::Experiment;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub seed: u64,
    pub method: String,
    pub k: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
    pub floor: bool,
}

impl BoundRow {
    pub fn is_violation(&self) -> bool {
        !self.satisfied && !self.floor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub seed: u64,
    pub method: String,
    pub k: usize,
    pub error_norm: f64,
    pub r_est: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TmeRow {
    pub seed: u64,
    pub init: usize,
    pub method: String,
    pub iterations: usize,
    pub wall_clock_s: f64,
    pub final_residual: f64,
    pub r_est_tail: f64,
}

/// Late-iterate pair ratios of a TME run against the deflated-spectrum bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TmeBoundRow {
    pub seed: u64,
    pub init: usize,
    pub method: String,
    pub k: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
    pub floor: bool,
}

impl TmeBoundRow {
    pub fn is_violation(&self) -> bool {
        !self.satisfied && !self.floor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct W0Row {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub w0: f64,
    pub op_norm: f64,
    pub rate_bound: f64,
    pub equality_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TightRow {
    pub k: usize,
    pub ratio: f64,
    pub target: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JacobianRow {
    pub seed: u64,
    pub symmetry_defect: f64,
    pub unit_row_error: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub op_norm: f64,
    pub w0: f64,
    pub rate_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub seed: u64,
    pub k: usize,
    pub frobenius_gap: f64,
}

/// Output of one experiment. Tables that do not apply stay empty.
#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub experiment: Option<Experiment>,
    pub bound: Vec<BoundRow>,
    pub rate: Vec<RateRow>,
    pub tme: Vec<TmeRow>,
    pub tme_bound: Vec<TmeBoundRow>,
    pub w0: Vec<W0Row>,
    pub tight: Vec<TightRow>,
    pub jacobian: Vec<JacobianRow>,
    pub compare: Vec<CompareRow>,
    pub summary: serde_json::Value,
    /// Invariant violations; the CLI exits non-zero when this is positive.
    pub violations: usize,
}

fn write_table<T: Serialize>(dir: &Path, name: &str, rows: &[T], out: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    if rows.is_empty() {
        return Ok(());
    }
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    out.push(path);
    Ok(())
}

impl ExperimentReport {
    /// Writes every non-empty table as `<name>.csv` plus `summary.json` into
    /// `dir`, returning the written paths.
    pub fn write_to(&self, dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut out = Vec::new();
        write_table(dir, "bound.csv", &self.bound, &mut out)?;
        write_table(dir, "rate.csv", &self.rate, &mut out)?;
        write_table(dir, "tme.csv", &self.tme, &mut out)?;
        write_table(dir, "tme_bound.csv", &self.tme_bound, &mut out)?;
        write_table(dir, "w0.csv", &self.w0, &mut out)?;
        write_table(dir, "tight.csv", &self.tight, &mut out)?;
        write_table(dir, "jacobian.csv", &self.jacobian, &mut out)?;
        write_table(dir, "compare.csv", &self.compare, &mut out)?;
        let path = dir.join("summary.json");
        fs::write(&path, serde_json::to_string_pretty(&self.summary)? + "\n")?;
        out.push(path);
        Ok(out)
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().cloned().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// JSON has no NaN or infinity; those become null.
pub fn json_f64(x: f64) -> serde_json::Value {
    serde_json::Number::from_f64(x)
        .map(serde_json::Value::Number)
        .unwrap_or(serde_json::Value::Null)
}
