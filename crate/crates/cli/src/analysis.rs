//! Post-run analysis helpers: cluster affinity of the learned
//! collaboration matrix on clustered synthetic data.

/// The cluster holding the majority of a client's training mass.
pub fn client_cluster(train_hist: &[usize], class_clusters: &[usize], n_clusters: usize) -> usize {
    let mut mass = vec![0usize; n_clusters];
    for (class, &count) in train_hist.iter().enumerate() {
        mass[class_clusters[class]] += count;
    }
    mass.iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(k, _)| k)
        .unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterStats {
    /// Mean weight toward peers in the same cluster.
    pub within_mean: f64,
    /// Mean weight toward peers in a different cluster.
    pub cross_mean: f64,
}

/// Means of off-diagonal collaboration weights, split by whether the edge
/// stays within one cluster of clients.
pub fn w_cluster_stats(w_rows: &[Vec<f64>], client_clusters: &[usize]) -> ClusterStats {
    let m = w_rows.len();
    let mut within = (0.0, 0usize);
    let mut cross = (0.0, 0usize);
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            if client_clusters[i] == client_clusters[j] {
                within.0 += w_rows[i][j];
                within.1 += 1;
            } else {
                cross.0 += w_rows[i][j];
                cross.1 += 1;
            }
        }
    }
    ClusterStats {
        within_mean: if within.1 > 0 { within.0 / within.1 as f64 } else { 0.0 },
        cross_mean: if cross.1 > 0 { cross.0 / cross.1 as f64 } else { 0.0 },
    }
}
