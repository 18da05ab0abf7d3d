//! Pure aggregation over a finished run: per-cell mean and standard deviation
//! across seeds, plus plot-ready trajectories extracted from the traces. No
//! metric is recomputed.

use super::{csv_io, SummaryRow};
use crate::error::{CoreError, Result};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub method: String,
    pub budget: u64,
    pub init: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n_seeds: usize,
}

#[derive(Debug)]
pub struct ReportTables {
    pub aggregate: Vec<AggregateRow>,
    /// (cell, iter, series, dim, value) long-format trajectory rows.
    pub trajectories: Vec<(String, usize, String, usize, f64)>,
}

pub fn parse_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_io)?;
    let mut rows = Vec::new();
    let mut bad_lines = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2; // header is line 1
        match rec {
            Err(e) => bad_lines.push(format!("line {line}: {e}")),
            Ok(r) => match parse_row(&r) {
                Ok(row) => rows.push(row),
                Err(e) => bad_lines.push(format!("line {line}: {e}")),
            },
        }
    }
    if !bad_lines.is_empty() {
        return Err(CoreError::domain(format!(
            "malformed summary rows:\n{}",
            bad_lines.join("\n")
        )));
    }
    Ok(rows)
}

fn parse_row(r: &csv::StringRecord) -> Result<SummaryRow> {
    if r.len() != 8 {
        return Err(CoreError::domain(format!("expected 8 fields, got {}", r.len())));
    }
    let field = |i: usize| r.get(i).unwrap_or_default();
    Ok(SummaryRow {
        method: field(0).to_string(),
        budget: field(1).parse().map_err(|e| CoreError::domain(format!("budget: {e}")))?,
        init: field(2).to_string(),
        seed: field(3).parse().map_err(|e| CoreError::domain(format!("seed: {e}")))?,
        metric: field(4).to_string(),
        value: field(5).parse().map_err(|e| CoreError::domain(format!("value: {e}")))?,
        samples_used: field(6)
            .parse()
            .map_err(|e| CoreError::domain(format!("samples_used: {e}")))?,
        wall_ms: field(7).parse().map_err(|e| CoreError::domain(format!("wall_ms: {e}")))?,
    })
}

/// Mean and standard deviation per (method, budget, init, metric) across seeds.
pub fn aggregate(rows: &[SummaryRow]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(String, u64, String, String), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.method.clone(), r.budget, r.init.clone(), r.metric.clone()))
            .or_default()
            .push(r.value);
    }
    groups
        .into_iter()
        .map(|((method, budget, init, metric), values)| {
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let std = if n < 2 {
                0.0
            } else {
                (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64)
                    .sqrt()
            };
            AggregateRow { method, budget, init, metric, mean, std, n_seeds: n }
        })
        .collect()
}

/// Read a run directory (summary.csv + traces/), aggregate, and write
/// aggregate.csv and trajectories.csv next to the summary.
pub fn report(run_dir: &Path) -> Result<ReportTables> {
    let rows = parse_summary(&run_dir.join("summary.csv"))?;
    let agg = aggregate(&rows);

    let mut w = csv::Writer::from_path(run_dir.join("aggregate.csv")).map_err(csv_io)?;
    w.write_record(["method", "budget", "init", "metric", "mean", "std", "n_seeds"])
        .map_err(csv_io)?;
    for a in &agg {
        w.write_record([
            a.method.clone(),
            a.budget.to_string(),
            a.init.clone(),
            a.metric.clone(),
            a.mean.to_string(),
            a.std.to_string(),
            a.n_seeds.to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;

    let trajectories = collect_trajectories(&run_dir.join("traces"))?;
    let mut w = csv::Writer::from_path(run_dir.join("trajectories.csv")).map_err(csv_io)?;
    w.write_record(["cell", "iter", "series", "dim", "value"]).map_err(csv_io)?;
    for (cell, iter, series, dim, value) in &trajectories {
        w.write_record([
            cell.clone(),
            iter.to_string(),
            series.clone(),
            dim.to_string(),
            value.to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(ReportTables { aggregate: agg, trajectories })
}

/// Pull plot-ready series out of each trace file: expected subset size and
/// annealed scale per iteration, per-source mean ratios, and the spectral
/// validation curves.
fn collect_trajectories(traces_dir: &Path) -> Result<Vec<(String, usize, String, usize, f64)>> {
    let mut out = Vec::new();
    if !traces_dir.exists() {
        return Ok(out);
    }
    let mut entries: Vec<_> = std::fs::read_dir(traces_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    entries.sort();
    for path in entries {
        let cell = path.file_stem().unwrap_or_default().to_string_lossy().to_string();
        let text = std::fs::read_to_string(&path)?;
        for (i, line) in text.lines().enumerate() {
            let v: serde_json::Value = serde_json::from_str(line)?;
            let iter = v.get("iter").and_then(|x| x.as_u64()).unwrap_or(i as u64) as usize;
            if let Some(s_sum) = v.get("s_sum").and_then(|x| x.as_f64()) {
                out.push((cell.clone(), iter, "s_sum".into(), 0, s_sum));
            }
            if let Some(sigma) = v.get("sigma").and_then(|x| x.as_f64()) {
                out.push((cell.clone(), iter, "sigma".into(), 0, sigma));
            }
            if let Some(s) = v.get("s").and_then(|x| x.as_array()) {
                // per-dimension means are only plot-sized for source policies
                if s.len() <= 16 {
                    for (d, val) in s.iter().enumerate() {
                        if let Some(f) = val.as_f64() {
                            out.push((cell.clone(), iter, "mean_ratio".into(), d, f));
                        }
                    }
                }
            }
            for key in ["val_mse_low", "val_mse_high"] {
                if let Some(f) = v.get(key).and_then(|x| x.as_f64()) {
                    out.push((cell.clone(), iter, key.into(), 0, f));
                }
            }
        }
    }
    Ok(out)
}
