//! Aggregation of run summaries into the per-(method, M) accuracy table.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use crate::artifacts::{atomic_write, write_json};
use crate::config::MethodName;
use crate::runner::RunSummary;

/// Mean and population standard deviation.
pub fn mean_and_pop_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: MethodName,
    pub m: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    /// Number of per-client accuracy values pooled into this row.
    pub n_values: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    /// Fixed-width text rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::from(format!(
            "{:<12} {:>5} {:>22}\n",
            "method", "M", "test accuracy"
        ));
        for row in &self.rows {
            out.push_str(&format!(
                "{:<12} {:>5} {:>12.4} +- {:.4}\n",
                row.method.as_str(),
                row.m,
                row.mean_accuracy,
                row.std_accuracy
            ));
        }
        out
    }
}

/// Pools per-client final accuracies by (method, M) and computes mean and
/// population std. Rows are ordered by method name, then M ascending.
pub fn emit_summary(results: &[RunSummary]) -> anyhow::Result<SummaryTable> {
    if results.is_empty() {
        bail!("no run summaries to aggregate");
    }
    let mut groups: std::collections::BTreeMap<(&'static str, usize), Vec<f64>> =
        std::collections::BTreeMap::new();
    let mut methods: std::collections::BTreeMap<&'static str, MethodName> =
        std::collections::BTreeMap::new();
    for run in results {
        let key = (run.method.as_str(), run.m);
        methods.insert(run.method.as_str(), run.method);
        let bucket = groups.entry(key).or_default();
        for rep in &run.per_repeat {
            bucket.extend(rep.per_client_accuracy.iter().copied());
        }
    }
    let rows = groups
        .into_iter()
        .map(|((name, m), values)| {
            let (mean_accuracy, std_accuracy) = mean_and_pop_std(&values);
            SummaryRow {
                method: methods[name],
                m,
                mean_accuracy,
                std_accuracy,
                n_values: values.len(),
            }
        })
        .collect();
    Ok(SummaryTable { rows })
}

fn find_summaries(dir: &Path, found: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            find_summaries(&path, found)?;
        } else if path.file_name().is_some_and(|n| n == "summary.json") {
            found.push(path);
        }
    }
    Ok(())
}

/// Aggregates every `summary.json` under `dir` and writes
/// `summary_table.json` and `summary_table.txt` there.
pub fn summarize_dir(dir: &Path) -> anyhow::Result<SummaryTable> {
    let mut paths = Vec::new();
    find_summaries(dir, &mut paths).with_context(|| format!("scanning {}", dir.display()))?;
    paths.sort();
    let mut results = Vec::with_capacity(paths.len());
    for path in &paths {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let summary: RunSummary = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", path.display()))?;
        results.push(summary);
    }
    let table = emit_summary(&results)?;
    write_json(&dir.join("summary_table.json"), &table)?;
    atomic_write(&dir.join("summary_table.txt"), table.to_text().as_bytes())?;
    Ok(table)
}
