//! Grid sweeps over a base config: neighbor-cap values or a (mu1, mu2) grid.
//! Each grid point is a full experiment in its own subdirectory; a
//! long-format CSV collects the headline metric per point.

use std::path::PathBuf;

use anyhow::{bail, Context};
use rayon::prelude::*;

use crate::artifacts::atomic_write;
use crate::config::ExperimentConfig;
use crate::runner::{run_experiment, RunSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[clap(rename_all = "snake_case")]
pub enum SweepAxis {
    NeighborCap,
    MuGrid,
}

impl std::str::FromStr for SweepAxis {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s {
            "neighbor_cap" => Ok(SweepAxis::NeighborCap),
            "mu_grid" => Ok(SweepAxis::MuGrid),
            other => bail!("unknown sweep axis '{}' (neighbor_cap | mu_grid)", other),
        }
    }
}

/// One grid point: the config delta and the directory name.
#[derive(Debug, Clone)]
struct Cell {
    name: String,
    config: ExperimentConfig,
    axis_fields: Vec<(String, String)>,
}

fn cells(base: &ExperimentConfig, axis: SweepAxis, values: &str) -> anyhow::Result<Vec<Cell>> {
    if values.trim().is_empty() {
        bail!("sweep values must be nonempty");
    }
    match axis {
        SweepAxis::NeighborCap => values
            .split(',')
            .map(|v| {
                let k: usize = v
                    .trim()
                    .parse()
                    .with_context(|| format!("neighbor cap '{}' is not an integer", v))?;
                if k < 1 {
                    bail!("neighbor cap must be >= 1");
                }
                let mut config = base.clone();
                config.channel.max_neighbors = Some(k);
                Ok(Cell {
                    name: format!("k_{}", k),
                    config,
                    axis_fields: vec![("neighbor_cap".into(), k.to_string())],
                })
            })
            .collect(),
        SweepAxis::MuGrid => {
            let grid: Vec<f64> = values
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .with_context(|| format!("mu value '{}' is not a number", v))
                })
                .collect::<anyhow::Result<_>>()?;
            if grid.iter().any(|&v| v < 0.0) {
                bail!("mu values must be >= 0");
            }
            let mut out = Vec::with_capacity(grid.len() * grid.len());
            for &mu1 in &grid {
                for &mu2 in &grid {
                    let mut config = base.clone();
                    config.regularizer.mu1 = mu1;
                    config.regularizer.mu2 = mu2;
                    out.push(Cell {
                        name: format!("mu1_{}_mu2_{}", mu1, mu2),
                        config,
                        axis_fields: vec![
                            ("mu1".into(), mu1.to_string()),
                            ("mu2".into(), mu2.to_string()),
                        ],
                    });
                }
            }
            Ok(out)
        }
    }
}

pub struct SweepOutput {
    pub dir: PathBuf,
    pub summaries: Vec<RunSummary>,
}

/// Runs every grid point and writes `sweep_results.csv` (long format).
pub fn run_sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &str,
) -> anyhow::Result<SweepOutput> {
    base.validate()?;
    let axis_name = match axis {
        SweepAxis::NeighborCap => "neighbor_cap",
        SweepAxis::MuGrid => "mu_grid",
    };
    let sweep_dir = PathBuf::from(&base.output_dir).join(format!("sweep_{}", axis_name));
    let mut grid = cells(base, axis, values)?;
    for cell in &mut grid {
        cell.config.output_dir = sweep_dir.join(&cell.name).to_string_lossy().into_owned();
    }

    let results: Vec<(Cell, RunSummary)> = grid
        .into_par_iter()
        .map(|cell| {
            let output = run_experiment(&cell.config)
                .with_context(|| format!("sweep cell {}", cell.name))?;
            Ok((cell, output.summary))
        })
        .collect::<anyhow::Result<_>>()?;

    let mut csv = String::new();
    let header_fields: Vec<String> = results[0]
        .0
        .axis_fields
        .iter()
        .map(|(k, _)| k.clone())
        .collect();
    csv.push_str(&header_fields.join(","));
    csv.push_str(",mean_accuracy,std_accuracy\n");
    for (cell, summary) in &results {
        let values: Vec<String> = cell.axis_fields.iter().map(|(_, v)| v.clone()).collect();
        csv.push_str(&format!(
            "{},{},{}\n",
            values.join(","),
            summary.mean_accuracy,
            summary.std_accuracy
        ));
    }
    atomic_write(&sweep_dir.join("sweep_results.csv"), csv.as_bytes())?;

    Ok(SweepOutput {
        dir: sweep_dir,
        summaries: results.into_iter().map(|(_, s)| s).collect(),
    })
}
