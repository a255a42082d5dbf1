//! CSV / JSON persistence and cross-seed summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use crate::harness::RunRecord;

/// 17 significant digits, so every f64 round-trips.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv_string(record: &RunRecord) -> String {
    let mut out = String::from("iter");
    for j in 0..record.d {
        write!(out, ",x_{j}").unwrap();
    }
    for j in 0..record.m {
        write!(out, ",f_{j}").unwrap();
    }
    for j in 0..record.v {
        write!(out, ",c_{j}").unwrap();
    }
    out.push_str(",mvar_hv,log_regret,wall_time_s\n");
    for r in &record.rows {
        out.push_str(&r.iter.to_string());
        for v in
            r.x.iter()
                .chain(&r.f)
                .chain(&r.c)
                .chain([&r.mvar_hv, &r.log_regret, &r.wall_time_s])
        {
            out.push(',');
            out.push_str(&fmt_float(*v));
        }
        out.push('\n');
    }
    out
}

/// Write `<stem>.csv` and `<stem>.json` for one record; returns the CSV path.
pub fn write_record(record: &RunRecord, dir: &Path) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let stem = record.config.trial_stem();
    let csv = dir.join(format!("{stem}.csv"));
    fs::write(&csv, csv_string(record)).with_context(|| format!("writing {}", csv.display()))?;
    let json = dir.join(format!("{stem}.json"));
    fs::write(&json, serde_json::to_string_pretty(record)?).with_context(|| format!("writing {}", json.display()))?;
    Ok(csv)
}

/// Every run record (`*.json` except summaries) in a directory, in file-name order.
pub fn load_records(dir: &Path) -> anyhow::Result<Vec<RunRecord>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .filter(|p| p.file_stem().is_some_and(|s| s != "summary"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p)?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub problem: String,
    pub method: String,
    pub n: usize,
    pub mean_final_log_regret: f64,
    /// Twice the standard error of the mean.
    pub two_se: f64,
    pub mean_final_hv: f64,
}

/// Mean and `2 * SE` of final log regret per (problem, method).
pub fn summarize(records: &[RunRecord]) -> anyhow::Result<Vec<GroupSummary>> {
    if records.is_empty() {
        bail!("no records to summarize");
    }
    let mut groups: BTreeMap<(String, String), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.config.problem.clone(), r.config.method.to_string()))
            .or_default()
            .push(r);
    }
    Ok(groups
        .into_iter()
        .map(|((problem, method), rs)| {
            let vals: Vec<f64> = rs.iter().map(|r| r.final_log_regret()).collect();
            let (mean, two_se) = mean_two_se(&vals);
            let mean_final_hv = rs.iter().map(|r| r.final_hv()).sum::<f64>() / rs.len() as f64;
            GroupSummary {
                problem,
                method,
                n: rs.len(),
                mean_final_log_regret: mean,
                two_se,
                mean_final_hv,
            }
        })
        .collect())
}

/// Sample mean and twice the standard error (0 for a single value).
pub fn mean_two_se(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 2.0 * (var / n).sqrt())
}

/// Write every record plus `summary.json`.
pub fn export(records: &[RunRecord], dir: &Path) -> anyhow::Result<Vec<GroupSummary>> {
    for r in records {
        write_record(r, dir)?;
    }
    let summary = summarize(records)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
