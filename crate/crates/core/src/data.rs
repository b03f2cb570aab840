//! Non-i.i.d. per-client datasets: a clustered synthetic generator, a
//! Dirichlet label-skew partitioner, and CSV ingestion for tabular data.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::Batch;
use crate::scalar::Scalar;

/// Labeled feature pool.
#[derive(Debug, Clone)]
pub struct Dataset<S> {
    features: Matrix<S>,
    labels: Vec<usize>,
    n_classes: usize,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(features: Matrix<S>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::DimMismatch(format!(
                "{} feature rows, {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                n_classes,
            });
        }
        if features.data().iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite {
                stage: "dataset features".into(),
            });
        }
        Ok(Self {
            features,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix<S> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Samples at the given pool indices as a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    /// The whole dataset as one batch.
    pub fn as_batch(&self) -> Batch<S> {
        Batch {
            features: self.features.clone(),
            labels: self.labels.clone(),
        }
    }

    /// A batch of the given rows.
    pub fn batch_of(&self, indices: &[usize]) -> Batch<S> {
        Batch {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Per-class sample counts.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0usize; self.n_classes];
        for &l in &self.labels {
            hist[l] += 1;
        }
        hist
    }
}

/// One client's local splits. Test follows the client's own distribution,
/// validation is held out of the train allocation and only reported.
#[derive(Debug, Clone)]
pub struct ClientData<S> {
    pub client_id: usize,
    pub train: Dataset<S>,
    pub validation: Dataset<S>,
    pub test: Dataset<S>,
}

/// Controls of the Dirichlet label-skew partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub m: usize,
    pub dirichlet_alpha: f64,
    pub min_train: usize,
    pub max_train: usize,
    pub test_per_client: usize,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidConfig("partition m must be >= 2".into()));
        }
        if !(self.dirichlet_alpha > 0.0) {
            return Err(Error::InvalidConfig("dirichlet_alpha must be > 0".into()));
        }
        if self.min_train < 1 || self.min_train > self.max_train {
            return Err(Error::InvalidConfig(
                "require 1 <= min_train <= max_train".into(),
            ));
        }
        if self.test_per_client < 1 {
            return Err(Error::InvalidConfig("test_per_client must be >= 1".into()));
        }
        Ok(())
    }
}

/// Fraction of each client's train allocation held out for validation.
pub const VALIDATION_FRACTION: f64 = 0.2;

const MAX_PROPORTION_RETRIES: usize = 100;

/// Pool indices per client split, for reproducibility audits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionManifest {
    pub clients: Vec<ClientSplitIndices>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClientSplitIndices {
    pub client_id: usize,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Synthetic pool plus the class-to-cluster assignment used to build it.
#[derive(Debug, Clone)]
pub struct SyntheticData<S> {
    pub dataset: Dataset<S>,
    /// `class_clusters[c]` is the cluster of class `c`.
    pub class_clusters: Vec<usize>,
}

fn random_unit_rotation(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Vec<f64>> {
    // Gram-Schmidt on a random Gaussian matrix yields a random orthogonal basis.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while basis.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            for x in &mut v {
                *x /= norm;
            }
            basis.push(v);
        }
    }
    basis
}

/// Gaussian class-conditional blobs whose classes are grouped into clusters.
///
/// All clusters share one constellation of class directions, mutually
/// rotated: cluster k's centroids are the base constellation turned by
/// `k * CLUSTER_ANGLE` toward a set of partner directions. The rotated
/// constellations occupy the same region with incompatible labelings, so a
/// single consensus model cannot serve every cluster, clients dominated by
/// one cluster's classes face genuinely similar tasks, and cross-cluster
/// collaboration is actively harmful.
pub fn generate_synthetic<S: Scalar>(
    n_classes: usize,
    n_features: usize,
    n_clusters: usize,
    samples_per_class: usize,
    seed: u64,
) -> Result<SyntheticData<S>> {
    if n_classes < 2 || n_clusters < 1 || samples_per_class < 1 {
        return Err(Error::InvalidConfig(
            "need n_classes >= 2, n_clusters >= 1, samples_per_class >= 1".into(),
        ));
    }
    if n_clusters > n_classes {
        return Err(Error::InvalidConfig(
            "n_clusters must not exceed n_classes".into(),
        ));
    }
    let classes_per_cluster = n_classes.div_ceil(n_clusters);
    if 2 * classes_per_cluster > n_features {
        return Err(Error::InvalidConfig(
            "need n_features >= 2 * ceil(n_classes / n_clusters) for rotated constellations"
                .into(),
        ));
    }

    // geometry tuned so a nearest-centroid classifier clears 80% accuracy
    // on the pool while few-shot clients stay far from that ceiling
    const CLASS_RADIUS: f64 = 4.6;
    const NOISE_STD: f64 = 1.0;
    // rotation between adjacent clusters' constellations
    const CLUSTER_ANGLE: f64 = 0.34;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // random global orientation; rows 0..ranks are class directions, rows
    // ranks..2*ranks their rotation partners
    let basis = random_unit_rotation(&mut rng, n_features);

    let class_clusters: Vec<usize> = (0..n_classes).map(|c| c % n_clusters).collect();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let k = class_clusters[c];
        let rank = c / n_clusters;
        let angle = k as f64 * CLUSTER_ANGLE;
        let (sin, cos) = angle.sin_cos();
        let dir = &basis[rank];
        let partner = &basis[classes_per_cluster + rank];
        let centroid: Vec<f64> = dir
            .iter()
            .zip(partner)
            .map(|(&d, &p)| CLASS_RADIUS * (cos * d + sin * p))
            .collect();
        centroids.push(centroid);
    }

    let n_total = n_classes * samples_per_class;
    let mut rows: Vec<Vec<S>> = Vec::with_capacity(n_total);
    let mut labels = Vec::with_capacity(n_total);
    for (c, centroid) in centroids.iter().enumerate() {
        for _ in 0..samples_per_class {
            let row: Vec<S> = centroid
                .iter()
                .map(|&m| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    S::from_f64_lossy(m + NOISE_STD * noise)
                })
                .collect();
            rows.push(row);
            labels.push(c);
        }
    }
    let dataset = Dataset::new(Matrix::from_rows(&rows)?, labels, n_classes)?;
    Ok(SyntheticData {
        dataset,
        class_clusters,
    })
}

fn dirichlet_proportions(rng: &mut ChaCha8Rng, alpha: f64, k: usize) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha > 0");
    loop {
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = draws.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            return draws.into_iter().map(|d| d / sum).collect();
        }
    }
}

/// Splits `total` into integer class counts proportional to `p`
/// (largest-remainder rounding).
fn apportion(p: &[f64], total: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = p.iter().map(|&q| (q * total as f64).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut fracs: Vec<(usize, f64)> = p
        .iter()
        .enumerate()
        .map(|(c, &q)| (c, q * total as f64 - counts[c] as f64))
        .collect();
    fracs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for &(c, _) in fracs.iter().take(total - assigned) {
        counts[c] += 1;
    }
    counts
}

/// Partitions a pool into per-client non-i.i.d. splits with class
/// proportions drawn from a symmetric Dirichlet distribution. Test samples
/// follow the same per-client distribution as train; validation is carved
/// from the train allocation. Sampling is without replacement; unsatisfiable
/// proportion draws are retried per client before erroring.
pub fn dirichlet_partition<S: Scalar>(
    data: &Dataset<S>,
    spec: &PartitionSpec,
) -> Result<(Vec<ClientData<S>>, PartitionManifest)> {
    spec.validate()?;
    let needed = spec.m * (spec.min_train + spec.test_per_client);
    if data.len() < needed {
        return Err(Error::InsufficientSamples(format!(
            "pool has {} samples, need at least {} for {} clients",
            data.len(),
            needed,
            spec.m
        )));
    }

    let k = data.n_classes();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in data.labels().iter().enumerate() {
        pools[l].push(i);
    }
    for pool in &mut pools {
        pool.shuffle(&mut rng);
    }

    let mut clients = Vec::with_capacity(spec.m);
    let mut manifest = Vec::with_capacity(spec.m);
    for client_id in 0..spec.m {
        let n_train = rng.gen_range(spec.min_train..=spec.max_train);
        let mut chosen: Option<(Vec<usize>, Vec<usize>)> = None;
        let mut last_shortfall = String::new();
        for _ in 0..MAX_PROPORTION_RETRIES {
            let p = dirichlet_proportions(&mut rng, spec.dirichlet_alpha, k);
            let train_counts = apportion(&p, n_train);
            let test_counts = apportion(&p, spec.test_per_client);
            let shortfall: Vec<String> = (0..k)
                .filter(|&c| train_counts[c] + test_counts[c] > pools[c].len())
                .map(|c| {
                    format!(
                        "class {}: need {}, have {}",
                        c,
                        train_counts[c] + test_counts[c],
                        pools[c].len()
                    )
                })
                .collect();
            if shortfall.is_empty() {
                chosen = Some((train_counts, test_counts));
                break;
            }
            last_shortfall = shortfall.join("; ");
        }
        let (train_counts, test_counts) = chosen.ok_or_else(|| {
            Error::InsufficientSamples(format!(
                "client {}: no satisfiable class proportions after {} retries ({})",
                client_id, MAX_PROPORTION_RETRIES, last_shortfall
            ))
        })?;

        let mut train_alloc = Vec::with_capacity(n_train);
        let mut test_idx = Vec::with_capacity(spec.test_per_client);
        for c in 0..k {
            for _ in 0..train_counts[c] {
                train_alloc.push(pools[c].pop().expect("checked availability"));
            }
            for _ in 0..test_counts[c] {
                test_idx.push(pools[c].pop().expect("checked availability"));
            }
        }
        let n_val = (VALIDATION_FRACTION * n_train as f64).floor() as usize;
        let val_idx = train_alloc.split_off(n_train - n_val);
        let train_idx = train_alloc;

        clients.push(ClientData {
            client_id,
            train: data.subset(&train_idx),
            validation: data.subset(&val_idx),
            test: data.subset(&test_idx),
        });
        manifest.push(ClientSplitIndices {
            client_id,
            train: train_idx,
            validation: val_idx,
            test: test_idx,
        });
    }
    Ok((clients, PartitionManifest { clients: manifest }))
}

/// A parsed CSV pool plus the label-name mapping that was applied.
#[derive(Debug, Clone)]
pub struct LoadedCsv<S> {
    pub dataset: Dataset<S>,
    /// `label_names[i]` is the original label mapped to class `i`.
    pub label_names: Vec<String>,
}

/// Loads a comma-separated file with a header row. All columns except the
/// label column must be numeric; labels are mapped to contiguous integers in
/// lexicographic order. With `normalize`, features are z-scored per column
/// (constant columns become zero).
pub fn load_csv<S: Scalar>(
    path: impl AsRef<Path>,
    label_column: &str,
    normalize: bool,
) -> Result<LoadedCsv<S>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path.as_ref())
        .map_err(|e| Error::Csv {
            line: 0,
            msg: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Csv {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Csv {
            line: 1,
            msg: format!("label column '{}' not found in header", label_column),
        })?;

    let mut raw_rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv {
            line: e
                .position()
                .map(|p| p.line())
                .unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != headers.len() {
            return Err(Error::Csv {
                line,
                msg: format!("expected {} fields, got {}", headers.len(), record.len()),
            });
        }
        let mut row = Vec::with_capacity(headers.len() - 1);
        for (col, field) in record.iter().enumerate() {
            if col == label_idx {
                raw_labels.push(field.to_string());
                continue;
            }
            let value: f64 = field.trim().parse().map_err(|_| Error::Csv {
                line,
                msg: format!(
                    "non-numeric feature '{}' in column '{}'",
                    field, &headers[col]
                ),
            })?;
            if value.is_nan() {
                return Err(Error::Csv {
                    line,
                    msg: format!("NaN feature in column '{}'", &headers[col]),
                });
            }
            row.push(value);
        }
        raw_rows.push(row);
    }
    if raw_rows.is_empty() {
        return Err(Error::Csv {
            line: 1,
            msg: "no data rows".into(),
        });
    }

    let mut label_names: Vec<String> = raw_labels.clone();
    label_names.sort();
    label_names.dedup();
    let index: BTreeMap<&str, usize> = label_names
        .iter()
        .enumerate()
        .map(|(i, name)| (name.as_str(), i))
        .collect();
    let labels: Vec<usize> = raw_labels.iter().map(|l| index[l.as_str()]).collect();

    if normalize {
        let n = raw_rows.len() as f64;
        let d = raw_rows[0].len();
        for j in 0..d {
            let mean = raw_rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = raw_rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            for row in &mut raw_rows {
                row[j] = if std > 0.0 { (row[j] - mean) / std } else { 0.0 };
            }
        }
    }

    let rows: Vec<Vec<S>> = raw_rows
        .into_iter()
        .map(|r| r.into_iter().map(S::from_f64_lossy).collect())
        .collect();
    let dataset = Dataset::new(Matrix::from_rows(&rows)?, labels, label_names.len())?;
    Ok(LoadedCsv {
        dataset,
        label_names,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn synthetic_pool_is_balanced_and_deterministic() {
        let a = generate_synthetic::<f64>(4, 6, 2, 100, 9).unwrap();
        assert_eq!(a.dataset.len(), 400);
        assert_eq!(a.dataset.class_histogram(), vec![100; 4]);
        assert_eq!(a.class_clusters, vec![0, 1, 0, 1]);
        let b = generate_synthetic::<f64>(4, 6, 2, 100, 9).unwrap();
        assert_eq!(a.dataset.features().data(), b.dataset.features().data());
        let c = generate_synthetic::<f64>(4, 6, 2, 100, 10).unwrap();
        assert_ne!(a.dataset.features().data(), c.dataset.features().data());
    }

    #[test]
    fn degenerate_synthetic_configs_are_rejected() {
        assert!(generate_synthetic::<f64>(2, 6, 3, 10, 0).is_err());
        assert!(generate_synthetic::<f64>(1, 6, 1, 10, 0).is_err());
        assert!(generate_synthetic::<f64>(4, 2, 3, 10, 0).is_err());
    }

    /// Nearest-centroid classifier, fit and evaluated on the full pool.
    fn centroid_classifier_accuracy(data: &Dataset<f64>) -> f64 {
        let k = data.n_classes();
        let d = data.n_features();
        let mut centroids = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (i, &l) in data.labels().iter().enumerate() {
            counts[l] += 1;
            for (acc, &x) in centroids[l].iter_mut().zip(data.features().row(i)) {
                *acc += x;
            }
        }
        for (c, count) in counts.iter().enumerate() {
            for v in &mut centroids[c] {
                *v /= *count as f64;
            }
        }
        let mut correct = 0usize;
        for (i, &l) in data.labels().iter().enumerate() {
            let row = data.features().row(i);
            let best = (0..k)
                .min_by(|&a, &b| {
                    let da: f64 = row
                        .iter()
                        .zip(&centroids[a])
                        .map(|(x, c)| (x - c).powi(2))
                        .sum();
                    let db: f64 = row
                        .iter()
                        .zip(&centroids[b])
                        .map(|(x, c)| (x - c).powi(2))
                        .sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            if best == l {
                correct += 1;
            }
        }
        correct as f64 / data.len() as f64
    }

    #[test]
    fn synthetic_classes_are_separable() {
        // experiment-scale pool: 9 classes, 20 features, 400 per class
        for seed in [7, 42, 99] {
            let synth = generate_synthetic::<f64>(9, 20, 2, 400, seed).unwrap();
            let acc = centroid_classifier_accuracy(&synth.dataset);
            assert!(acc > 0.8, "nearest-centroid accuracy only {} (seed {})", acc, seed);
        }
    }

    fn spec(m: usize, alpha: f64, seed: u64) -> PartitionSpec {
        PartitionSpec {
            m,
            dirichlet_alpha: alpha,
            min_train: 15,
            max_train: 100,
            test_per_client: 100,
            seed,
        }
    }

    #[test]
    fn partition_sizes_and_disjointness() {
        let synth = generate_synthetic::<f64>(9, 20, 2, 600, 3).unwrap();
        let s = spec(10, 0.1, 11);
        let (clients, manifest) = dirichlet_partition(&synth.dataset, &s).unwrap();
        assert_eq!(clients.len(), 10);
        let mut seen = std::collections::HashSet::new();
        for (c, entry) in clients.iter().zip(&manifest.clients) {
            let n_alloc = entry.train.len() + entry.validation.len();
            assert!(n_alloc >= s.min_train && n_alloc <= s.max_train);
            assert_eq!(entry.validation.len(), (0.2 * n_alloc as f64) as usize);
            assert_eq!(entry.test.len(), 100);
            assert!(!c.train.is_empty());
            assert_eq!(c.train.len(), entry.train.len());
            for &i in entry.train.iter().chain(&entry.validation).chain(&entry.test) {
                assert!(seen.insert(i), "pool index {} reused", i);
            }
        }
    }

    #[test]
    fn partition_is_deterministic_under_seed() {
        let synth = generate_synthetic::<f64>(9, 20, 2, 600, 3).unwrap();
        let s = spec(10, 0.1, 42);
        let (_, m1) = dirichlet_partition(&synth.dataset, &s).unwrap();
        let (_, m2) = dirichlet_partition(&synth.dataset, &s).unwrap();
        for (a, b) in m1.clients.iter().zip(&m2.clients) {
            assert_eq!(a.train, b.train);
            assert_eq!(a.validation, b.validation);
            assert_eq!(a.test, b.test);
        }
    }

    #[test]
    fn huge_alpha_gives_near_uniform_proportions() {
        let synth = generate_synthetic::<f64>(4, 8, 2, 6_000, 5).unwrap();
        let s = PartitionSpec {
            m: 4,
            dirichlet_alpha: 1e6,
            min_train: 1000,
            max_train: 1000,
            test_per_client: 100,
            seed: 8,
        };
        let (clients, _) = dirichlet_partition(&synth.dataset, &s).unwrap();
        for c in &clients {
            let total = (c.train.len() + c.validation.len()) as f64;
            let mut hist = c.train.class_histogram();
            for (h, v) in hist.iter_mut().zip(c.validation.class_histogram()) {
                *h += v;
            }
            for &count in &hist {
                let dev = (count as f64 / total - 0.25).abs();
                assert!(dev < 0.05, "class proportion deviates by {}", dev);
            }
        }
    }

    #[test]
    fn small_alpha_concentrates_labels() {
        // over 100 seeds: median number of classes holding >= 5% of a
        // client's mass stays <= 4, and on average >= 50% of classes are empty
        let synth = generate_synthetic::<f64>(9, 20, 2, 600, 1).unwrap();
        let mut significant_counts = Vec::new();
        let mut zero_fraction_sum = 0.0;
        let mut clients_seen = 0usize;
        for seed in 0..100 {
            let (clients, _) = dirichlet_partition(&synth.dataset, &spec(20, 0.1, seed)).unwrap();
            for c in &clients {
                let mut hist = c.train.class_histogram();
                for (h, v) in hist.iter_mut().zip(c.validation.class_histogram()) {
                    *h += v;
                }
                let total: usize = hist.iter().sum();
                let significant = hist
                    .iter()
                    .filter(|&&h| h as f64 / total as f64 >= 0.05)
                    .count();
                significant_counts.push(significant);
                let zeros = hist.iter().filter(|&&h| h == 0).count();
                zero_fraction_sum += zeros as f64 / 9.0;
                clients_seen += 1;
            }
        }
        significant_counts.sort_unstable();
        let median = significant_counts[significant_counts.len() / 2];
        assert!(median <= 4, "median significant classes = {}", median);
        let mean_zero_fraction = zero_fraction_sum / clients_seen as f64;
        assert!(
            mean_zero_fraction >= 0.5,
            "mean zero-class fraction = {}",
            mean_zero_fraction
        );
    }

    #[test]
    fn insufficient_pool_is_reported() {
        let synth = generate_synthetic::<f64>(4, 8, 2, 10, 5).unwrap();
        let err = dirichlet_partition(&synth.dataset, &spec(10, 0.1, 0)).unwrap_err();
        assert!(matches!(err, Error::InsufficientSamples(_)));
    }

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_toy_file_loads_with_label_mapping() {
        let f = write_csv("a,b,label\n1.0,2.0,cat\n3.0,4.0,dog\n5.0,6.0,cat\n");
        let loaded = load_csv::<f64>(f.path(), "label", false).unwrap();
        assert_eq!(loaded.dataset.len(), 3);
        assert_eq!(loaded.dataset.n_features(), 2);
        assert_eq!(loaded.label_names, vec!["cat", "dog"]);
        assert_eq!(loaded.dataset.labels(), &[0, 1, 0]);
        assert_eq!(loaded.dataset.features().get(1, 1), 4.0);
    }

    #[test]
    fn csv_normalization_zscores_columns() {
        let f = write_csv("x,y,label\n1.0,7.0,a\n2.0,7.0,b\n3.0,7.0,a\n6.0,7.0,b\n");
        let loaded = load_csv::<f64>(f.path(), "label", true).unwrap();
        let feats = loaded.dataset.features();
        let n = feats.rows() as f64;
        let mean: f64 = (0..feats.rows()).map(|i| feats.get(i, 0)).sum::<f64>() / n;
        let var: f64 = (0..feats.rows())
            .map(|i| (feats.get(i, 0) - mean).powi(2))
            .sum::<f64>()
            / n;
        assert!(mean.abs() < 1e-9);
        assert!((var.sqrt() - 1.0).abs() < 1e-6);
        // constant column becomes zeros, no division by zero
        for i in 0..feats.rows() {
            assert_eq!(feats.get(i, 1), 0.0);
        }
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let missing = load_csv::<f64>("/nonexistent/file.csv", "label", false);
        assert!(missing.is_err());

        let f = write_csv("a,b,label\n1.0,2.0,x\noops,4.0,y\n");
        match load_csv::<f64>(f.path(), "label", false) {
            Err(Error::Csv { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("non-numeric"));
            }
            other => panic!("expected csv error, got {:?}", other.map(|_| ())),
        }

        let f = write_csv("a,b,label\n1.0,2.0\n");
        match load_csv::<f64>(f.path(), "label", false) {
            Err(Error::Csv { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected csv error, got {:?}", other.map(|_| ())),
        }

        let f = write_csv("a,b,label\n1.0,2.0,x\n");
        assert!(load_csv::<f64>(f.path(), "missing", false).is_err());
    }
}
