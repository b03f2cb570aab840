//! Builds the per-repeat world (data, partition, clients), runs the selected
//! method, and writes the artifact directory.

use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use pdfl_core::collab::{w_matrix_csv, RegularizerConfig};
use pdfl_core::data::{
    dirichlet_partition, generate_synthetic, load_csv, ClientData, PartitionManifest,
    PartitionSpec,
};
use pdfl_core::channel::ChannelModel;
use pdfl_core::nn::Architecture;
use pdfl_core::rng::{derive_seed, StreamPurpose};
use pdfl_core::sim::{build_clients, run_baseline, run_kd_pdfl, Baseline, SimConfig, Split};
use pdfl_core::SimResult64;

use crate::artifacts::{atomic_write, messages_jsonl, metrics_csv, write_json};
use crate::config::{DatasetSpec, ExperimentConfig, MethodName};
use crate::summary::mean_and_pop_std;

/// Per-repeat aggregate written into the run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatSummary {
    pub repeat: usize,
    pub seed: u64,
    pub resolved_c_base: f64,
    pub mean_accuracy: f64,
    pub per_client_accuracy: Vec<f64>,
    pub per_client_loss: Vec<f64>,
}

/// Aggregate of one experiment (all repeats).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: MethodName,
    pub m: usize,
    pub n_repeats: usize,
    pub t_max: u64,
    pub t_ex: u64,
    /// Mean of per-client final test accuracy across clients and repeats.
    pub mean_accuracy: f64,
    /// Population standard deviation over the same values.
    pub std_accuracy: f64,
    pub per_repeat: Vec<RepeatSummary>,
}

pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub summary: RunSummary,
}

/// The world of one repeat before simulation.
pub struct RepeatWorld {
    pub clients: Vec<pdfl_core::ClientRuntime64>,
    pub manifest: PartitionManifest,
    pub sim_config: SimConfig<f64>,
    /// Class-to-cluster assignment for synthetic data.
    pub class_clusters: Option<Vec<usize>>,
}

/// Seed of repeat `r`: repeats are independent runs offset from the master.
pub fn repeat_seed(cfg: &ExperimentConfig, repeat: usize) -> u64 {
    cfg.master_seed.wrapping_add(repeat as u64)
}

/// Builds dataset, partition, and client fleet for one repeat.
pub fn build_repeat_world(cfg: &ExperimentConfig, repeat: usize) -> anyhow::Result<RepeatWorld> {
    let seed = repeat_seed(cfg, repeat);
    let (pool, class_clusters) = match &cfg.dataset {
        DatasetSpec::Synthetic(s) => {
            let gen_seed: u64 = derive_seed(seed, StreamPurpose::DatasetGen, 0);
            let synth = generate_synthetic::<f64>(
                s.n_classes,
                s.n_features,
                s.n_clusters,
                s.samples_per_class,
                gen_seed,
            )?;
            (synth.dataset, Some(synth.class_clusters))
        }
        DatasetSpec::Csv(c) => {
            let loaded = load_csv::<f64>(&c.path, &c.label_column, c.normalize)?;
            (loaded.dataset, None)
        }
    };

    let partition_seed: u64 = derive_seed(seed, StreamPurpose::Partition, 0);
    let spec = PartitionSpec {
        m: cfg.m,
        dirichlet_alpha: cfg.partition.dirichlet_alpha,
        min_train: cfg.partition.min_train,
        max_train: cfg.partition.max_train,
        test_per_client: cfg.partition.test_per_client,
        seed: partition_seed,
    };
    let (client_data, manifest) = dirichlet_partition(&pool, &spec)?;

    let arch = Architecture::new(
        pool.n_features(),
        cfg.architecture.hidden_dims.clone(),
        pool.n_classes(),
        cfg.architecture.use_batchnorm,
    )?;
    let c_base = resolve_c_base(cfg, &client_data);
    let clients = build_clients(client_data, &arch, cfg.local_lr, seed)?;

    let sim_config = SimConfig {
        t_max: cfg.t_max,
        t_ex: cfg.t_ex,
        local_lr: cfg.local_lr,
        batch_size: cfg.batch_size,
        probe_batch_size: cfg.probe_batch_size,
        probe_comparison: cfg.probe_comparison(),
        reg: RegularizerConfig {
            mu1: cfg.regularizer.mu1,
            mu2: cfg.regularizer.mu2,
            epsilon: cfg.regularizer.epsilon,
            step_mode: cfg.regularizer.step_mode,
            eta_w: cfg.regularizer.eta_w,
        },
        c_base,
        channel: ChannelModel::rayleigh(
            cfg.m,
            cfg.channel.target_mean_neighbors,
            cfg.channel.max_neighbors,
        )?,
        packet_loss: cfg.channel.packet_loss,
        broadcast_rule: cfg.broadcast_rule,
        staleness_horizon: cfg.resolved_staleness(),
        confidence_mode: cfg.confidence_mode,
        reptile_beta: cfg.reptile.beta,
        reptile_inner_steps: cfg.reptile.inner_steps,
        master_seed: seed,
    };
    Ok(RepeatWorld {
        clients,
        manifest,
        sim_config,
        class_clusters,
    })
}

/// `c_base` defaults to half the mean client train-set size: at mixing time
/// every star then holds the full neighbor-share self-weight, while at
/// broadcast time data-poor clients absorb more of the received model than
/// data-rich ones.
fn resolve_c_base(cfg: &ExperimentConfig, clients: &[ClientData<f64>]) -> f64 {
    cfg.c_base.unwrap_or_else(|| {
        let mean = clients.iter().map(|c| c.train.len()).sum::<usize>() as f64
            / clients.len() as f64;
        0.5 * mean
    })
}

/// Runs one repeat and returns its simulation result and resolved c_base.
pub fn run_single_repeat(
    cfg: &ExperimentConfig,
    repeat: usize,
) -> anyhow::Result<(SimResult64, f64, PartitionManifest)> {
    let world = build_repeat_world(cfg, repeat)?;
    let c_base = world.sim_config.c_base;
    let manifest = world.manifest;
    let result = match cfg.method {
        MethodName::KdPdfl => run_kd_pdfl(world.clients, &world.sim_config)?,
        MethodName::LocalOnly => {
            run_baseline(world.clients, &world.sim_config, Baseline::LocalOnly)?
        }
        MethodName::Fedavg => run_baseline(world.clients, &world.sim_config, Baseline::FedAvg)?,
        MethodName::FedavgPlus => run_baseline(
            world.clients,
            &world.sim_config,
            Baseline::FedAvgPlus {
                t_switch: cfg.resolved_t_switch(),
            },
        )?,
    };
    Ok((result, c_base, manifest))
}

fn repeat_summary(
    result: &SimResult64,
    cfg: &ExperimentConfig,
    repeat: usize,
    c_base: f64,
) -> RepeatSummary {
    let m = result.final_models.len();
    let mut per_client_accuracy = vec![0.0; m];
    let mut per_client_loss = vec![0.0; m];
    for r in result
        .metrics
        .iter()
        .filter(|r| r.t == cfg.t_max && r.split == Split::Test)
    {
        per_client_accuracy[r.client_id] = r.accuracy;
        per_client_loss[r.client_id] = r.loss;
    }
    let (mean_accuracy, _) = mean_and_pop_std(&per_client_accuracy);
    RepeatSummary {
        repeat,
        seed: repeat_seed(cfg, repeat),
        resolved_c_base: c_base,
        mean_accuracy,
        per_client_accuracy,
        per_client_loss,
    }
}

fn write_repeat_artifacts(
    dir: &Path,
    cfg: &ExperimentConfig,
    result: &SimResult64,
    manifest: &PartitionManifest,
) -> anyhow::Result<()> {
    atomic_write(&dir.join("metrics.csv"), metrics_csv(&result.metrics).as_bytes())?;
    if let Some(w) = &result.final_w {
        atomic_write(
            &dir.join("w_final.csv"),
            w_matrix_csv(&w.rows, &w.confidences).as_bytes(),
        )?;
    }
    write_json(&dir.join("partition_manifest.json"), manifest)?;
    if cfg.message_log {
        atomic_write(
            &dir.join("messages.jsonl"),
            messages_jsonl(&result.messages)?.as_bytes(),
        )?;
    }
    Ok(())
}

/// Runs all repeats, writes the artifact directory, returns the summary.
pub fn run_experiment(cfg: &ExperimentConfig) -> anyhow::Result<ExperimentOutput> {
    cfg.validate()?;
    let dir = PathBuf::from(&cfg.output_dir);
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output dir {}", dir.display()))?;
    write_json(&dir.join("effective_config.json"), cfg)?;

    let results: Vec<(SimResult64, f64, PartitionManifest)> = (0..cfg.n_repeats)
        .into_par_iter()
        .map(|repeat| {
            run_single_repeat(cfg, repeat)
                .with_context(|| format!("repeat {}", repeat))
        })
        .collect::<anyhow::Result<_>>()?;

    let mut per_repeat = Vec::with_capacity(cfg.n_repeats);
    for (repeat, (result, c_base, manifest)) in results.iter().enumerate() {
        let rep_dir = dir.join(format!("rep_{}", repeat));
        write_repeat_artifacts(&rep_dir, cfg, result, manifest)?;
        per_repeat.push(repeat_summary(result, cfg, repeat, *c_base));
    }

    let pooled: Vec<f64> = per_repeat
        .iter()
        .flat_map(|r| r.per_client_accuracy.iter().copied())
        .collect();
    let (mean_accuracy, std_accuracy) = mean_and_pop_std(&pooled);
    let summary = RunSummary {
        method: cfg.method,
        m: cfg.m,
        n_repeats: cfg.n_repeats,
        t_max: cfg.t_max,
        t_ex: cfg.t_ex,
        mean_accuracy,
        std_accuracy,
        per_repeat,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(ExperimentOutput { dir, summary })
}
