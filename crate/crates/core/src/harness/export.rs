use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ExperimentResult, RunRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Csv,
    Json,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            _ => Err(Error::Config(format!("unknown format `{s}` (expected csv or json)"))),
        }
    }
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Json => "json",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExportOptions {
    /// Keep wall-clock columns. Off for byte-reproducible output.
    pub include_timing: bool,
}

impl Default for ExportOptions {
    fn default() -> Self {
        Self { include_timing: true }
    }
}

const RECORD_COLUMNS: [&str; 21] = [
    "scheme",
    "sweep_variable",
    "sweep_value",
    "point",
    "realization",
    "seed",
    "p_max",
    "status",
    "min_sr",
    "lifted_t",
    "power_common",
    "power_private",
    "power_an",
    "power_total",
    "r_c",
    "r_c_e",
    "common_share_sum",
    "iterations",
    "v_residual",
    "w_residual",
    "error",
];

const USER_COLUMNS: [&str; 11] = [
    "scheme",
    "sweep_variable",
    "sweep_value",
    "realization",
    "user",
    "sr",
    "common_share",
    "private_sr",
    "r_p",
    "r_pe",
    "r_c",
];

const SUMMARY_COLUMNS: [&str; 12] = [
    "scheme",
    "sweep_variable",
    "sweep_value",
    "runs",
    "failed",
    "mean_min_sr",
    "std_min_sr",
    "mean_power_common",
    "mean_power_private",
    "mean_power_an",
    "mean_common_share",
    "mean_private_sr",
];

fn record_row(r: &RunRecord, timing: bool) -> Vec<String> {
    let opt = |f: &dyn Fn(&super::RunMetrics) -> String| r.metrics.as_ref().map(f).unwrap_or_default();
    let mut row = vec![
        r.scheme.to_string(),
        r.sweep_variable.clone(),
        r.sweep_value.to_string(),
        r.point.to_string(),
        r.realization.to_string(),
        r.seed.to_string(),
        r.p_max.to_string(),
        serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        opt(&|m| m.min_sr.to_string()),
        opt(&|m| m.lifted_t.to_string()),
        opt(&|m| m.power_common.to_string()),
        opt(&|m| m.power_private.to_string()),
        opt(&|m| m.power_an.to_string()),
        opt(&|m| m.total_power().to_string()),
        opt(&|m| m.r_c.to_string()),
        opt(&|m| m.r_c_e.to_string()),
        opt(&|m| m.common_share_sum.to_string()),
        opt(&|m| m.iterations.to_string()),
        opt(&|m| m.v_residual.to_string()),
        opt(&|m| m.w_residual.to_string()),
        r.error.clone().unwrap_or_default(),
    ];
    if timing {
        row.push(opt(&|m| m.wall_time.to_string()));
    }
    row
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_table(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `records`, `users` and `summary` tables (CSV) or one `result.json`
/// into `dir`, returning the paths written.
pub fn export(result: &ExperimentResult, dir: &Path, format: ExportFormat, opts: ExportOptions) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    match format {
        ExportFormat::Csv => {
            let timing = opts.include_timing;
            let records = dir.join("records.csv");
            let mut header = RECORD_COLUMNS.to_vec();
            if timing {
                header.push("wall_time");
            }
            write_table(&records, &header, result.records.iter().map(|r| record_row(r, timing)))?;

            let users = dir.join("users.csv");
            let user_rows = result.records.iter().flat_map(|r| {
                r.metrics.iter().flat_map(|m| &m.users).map(move |u| {
                    vec![
                        r.scheme.to_string(),
                        r.sweep_variable.clone(),
                        r.sweep_value.to_string(),
                        r.realization.to_string(),
                        u.user.to_string(),
                        u.sr.to_string(),
                        u.common_share.to_string(),
                        u.private_sr.to_string(),
                        u.r_p.to_string(),
                        u.r_pe.to_string(),
                        u.r_c.to_string(),
                    ]
                })
            });
            write_table(&users, &USER_COLUMNS, user_rows)?;

            let summary = dir.join("summary.csv");
            let summary_rows = result.summary.iter().map(|s| {
                vec![
                    s.scheme.to_string(),
                    s.sweep_variable.clone(),
                    s.sweep_value.to_string(),
                    s.runs.to_string(),
                    s.failed.to_string(),
                    s.mean_min_sr.to_string(),
                    s.std_min_sr.to_string(),
                    s.mean_power_common.to_string(),
                    s.mean_power_private.to_string(),
                    s.mean_power_an.to_string(),
                    s.mean_common_share.to_string(),
                    s.mean_private_sr.to_string(),
                ]
            });
            write_table(&summary, &SUMMARY_COLUMNS, summary_rows)?;
            Ok(vec![records, users, summary])
        }
        ExportFormat::Json => {
            let path = dir.join("result.json");
            let mut result = result.clone();
            if !opts.include_timing {
                for m in result.records.iter_mut().filter_map(|r| r.metrics.as_mut()) {
                    m.wall_time = 0.0;
                }
            }
            let mut w = create(&path)?;
            serde_json::to_writer_pretty(&mut w, &result)?;
            w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))?;
            Ok(vec![path])
        }
    }
}

pub fn read_result_json(path: &Path) -> Result<ExperimentResult> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
