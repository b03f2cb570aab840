//! Runs every method on one base configuration and prints a comparison,
//! plus cluster-affinity statistics of the learned collaboration matrix
//! when the dataset is clustered synthetic data.
//!
//! Usage: cargo run --release -p pdfl-cli --example compare_methods -- <config.json>

use pdfl_cli::analysis::{client_cluster, w_cluster_stats};
use pdfl_cli::config::{parse_config, MethodName};
use pdfl_cli::runner::{build_repeat_world, run_experiment, run_single_repeat};

fn main() -> anyhow::Result<()> {
    let path = std::env::args()
        .nth(1)
        .ok_or_else(|| anyhow::anyhow!("usage: compare_methods <config.json>"))?;
    let base = parse_config(&path)?;

    for method in [
        MethodName::LocalOnly,
        MethodName::Fedavg,
        MethodName::FedavgPlus,
        MethodName::KdPdfl,
    ] {
        let mut cfg = base.clone();
        cfg.method = method;
        cfg.output_dir = format!("{}/{}", base.output_dir, method.as_str());
        let started = std::time::Instant::now();
        let out = run_experiment(&cfg)?;
        println!(
            "{:<12} mean {:.4} +- {:.4}  ({:.1}s)",
            method.as_str(),
            out.summary.mean_accuracy,
            out.summary.std_accuracy,
            started.elapsed().as_secs_f64()
        );
        for rep in &out.summary.per_repeat {
            println!(
                "    rep {}: mean {:.4}  c_base {:.1}",
                rep.repeat, rep.mean_accuracy, rep.resolved_c_base
            );
        }
    }

    // cluster affinity of the final collaboration matrix per repeat
    let mut cfg = base.clone();
    cfg.method = MethodName::KdPdfl;
    for repeat in 0..cfg.n_repeats {
        let world = build_repeat_world(&cfg, repeat)?;
        let Some(class_clusters) = world.class_clusters.clone() else {
            break;
        };
        let n_clusters = class_clusters.iter().max().map_or(1, |&k| k + 1);
        let client_clusters: Vec<usize> = world
            .clients
            .iter()
            .map(|c| client_cluster(&c.data.train.class_histogram(), &class_clusters, n_clusters))
            .collect();
        let (result, _, _) = run_single_repeat(&cfg, repeat)?;
        let w = result.final_w.expect("collaboration matrix");
        let stats = w_cluster_stats(&w.rows, &client_clusters);
        println!(
            "rep {}: within-cluster mean w {:.4}, cross-cluster mean w {:.4}, clusters {:?}",
            repeat, stats.within_mean, stats.cross_mean, client_clusters
        );
    }
    Ok(())
}
