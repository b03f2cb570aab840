//! Experiment configuration: a single JSON file with centralized defaults.
//! Unknown keys are rejected; the fully resolved config is echoed back next
//! to the artifacts so every result is regenerable from that file alone.

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use pdfl_core::collab::StepMode;
use pdfl_core::distill::ProbeComparison;
use pdfl_core::sim::{BroadcastRule, ConfidenceMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum DatasetSpec {
    Synthetic(SyntheticSpec),
    Csv(CsvSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default = "default_n_classes")]
    pub n_classes: usize,
    #[serde(default = "default_n_features")]
    pub n_features: usize,
    #[serde(default = "default_n_clusters")]
    pub n_clusters: usize,
    #[serde(default = "default_samples_per_class")]
    pub samples_per_class: usize,
}

fn default_n_classes() -> usize {
    9
}
fn default_n_features() -> usize {
    20
}
fn default_n_clusters() -> usize {
    2
}
fn default_samples_per_class() -> usize {
    400
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_classes: default_n_classes(),
            n_features: default_n_features(),
            n_clusters: default_n_clusters(),
            samples_per_class: default_samples_per_class(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSpec {
    pub path: String,
    pub label_column: String,
    #[serde(default = "default_true")]
    pub normalize: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    #[serde(default = "default_alpha")]
    pub dirichlet_alpha: f64,
    #[serde(default = "default_min_train")]
    pub min_train: usize,
    #[serde(default = "default_max_train")]
    pub max_train: usize,
    #[serde(default = "default_test_per_client")]
    pub test_per_client: usize,
}

fn default_alpha() -> f64 {
    0.1
}
fn default_min_train() -> usize {
    15
}
fn default_max_train() -> usize {
    100
}
fn default_test_per_client() -> usize {
    100
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            dirichlet_alpha: default_alpha(),
            min_train: default_min_train(),
            max_train: default_max_train(),
            test_per_client: default_test_per_client(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureConfig {
    #[serde(default = "default_hidden_dims")]
    pub hidden_dims: Vec<usize>,
    #[serde(default = "default_true")]
    pub use_batchnorm: bool,
}

fn default_hidden_dims() -> Vec<usize> {
    vec![32]
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            hidden_dims: default_hidden_dims(),
            use_batchnorm: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerSection {
    #[serde(default = "default_mu1")]
    pub mu1: f64,
    #[serde(default = "default_mu2")]
    pub mu2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_step_mode")]
    pub step_mode: StepMode,
    #[serde(default = "default_eta_w")]
    pub eta_w: f64,
}

fn default_mu1() -> f64 {
    1.0
}
fn default_mu2() -> f64 {
    0.02
}
fn default_epsilon() -> f64 {
    1e-8
}
fn default_step_mode() -> StepMode {
    StepMode::NormalizedScalar
}
fn default_eta_w() -> f64 {
    0.1
}

impl Default for RegularizerSection {
    fn default() -> Self {
        Self {
            mu1: default_mu1(),
            mu2: default_mu2(),
            epsilon: default_epsilon(),
            step_mode: default_step_mode(),
            eta_w: default_eta_w(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default = "default_target_mean")]
    pub target_mean_neighbors: f64,
    /// Cap on the neighbor set; `null` means uncapped (`m - 1`). Defaults
    /// to a small cap: considering many peers at once walks the protocol
    /// back toward plain averaging.
    #[serde(default = "default_max_neighbors")]
    pub max_neighbors: Option<usize>,
    #[serde(default)]
    pub packet_loss: f64,
}

fn default_target_mean() -> f64 {
    5.0
}

fn default_max_neighbors() -> Option<usize> {
    Some(3)
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            target_mean_neighbors: default_target_mean(),
            max_neighbors: default_max_neighbors(),
            packet_loss: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    KdPdfl,
    LocalOnly,
    Fedavg,
    FedavgPlus,
}

impl MethodName {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::KdPdfl => "kd_pdfl",
            MethodName::LocalOnly => "local_only",
            MethodName::Fedavg => "fedavg",
            MethodName::FedavgPlus => "fedavg_plus",
        }
    }
}

/// Footprint retention policy: a fixed iteration horizon, the exchange
/// interval (only the current event's footprints survive), or unlimited.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StalenessConfig {
    Steps(u64),
    Mode(StalenessMode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StalenessMode {
    ExchangeInterval,
    Unlimited,
}

impl Default for StalenessConfig {
    fn default() -> Self {
        StalenessConfig::Mode(StalenessMode::ExchangeInterval)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReptileConfig {
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_inner_steps")]
    pub inner_steps: u64,
}

fn default_beta() -> f64 {
    0.5
}
fn default_inner_steps() -> u64 {
    10
}

impl Default for ReptileConfig {
    fn default() -> Self {
        Self {
            beta: default_beta(),
            inner_steps: default_inner_steps(),
        }
    }
}

/// Everything a run needs. Only `dataset` and `m` are mandatory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub m: usize,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub architecture: ArchitectureConfig,
    #[serde(default = "default_t_max")]
    pub t_max: u64,
    #[serde(default = "default_t_ex")]
    pub t_ex: u64,
    #[serde(default = "default_local_lr")]
    pub local_lr: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_batch_size")]
    pub probe_batch_size: usize,
    /// Compare raw logits instead of softmax outputs in the probe.
    #[serde(default)]
    pub compare_presoftmax: bool,
    #[serde(default)]
    pub regularizer: RegularizerSection,
    /// Base confidence constant; `null` resolves to half the mean client
    /// train-set size of the repeat.
    #[serde(default)]
    pub c_base: Option<f64>,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default = "default_method")]
    pub method: MethodName,
    /// Iteration at which fedavg_plus stops communicating; `null` resolves
    /// to `t_max / 2`.
    #[serde(default)]
    pub t_switch: Option<u64>,
    #[serde(default = "default_broadcast_rule")]
    pub broadcast_rule: BroadcastRule,
    /// Iterations a footprint stays eligible for mixing: a number,
    /// "exchange_interval" (default), or "unlimited".
    #[serde(default)]
    pub staleness_horizon: StalenessConfig,
    #[serde(default = "default_confidence_mode")]
    pub confidence_mode: ConfidenceMode,
    #[serde(default)]
    pub reptile: ReptileConfig,
    #[serde(default = "default_n_repeats")]
    pub n_repeats: usize,
    #[serde(default = "default_master_seed")]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    /// Write the per-message transmission log (JSON lines).
    #[serde(default)]
    pub message_log: bool,
}

fn default_t_max() -> u64 {
    2000
}
fn default_t_ex() -> u64 {
    5
}
fn default_local_lr() -> f64 {
    0.02
}
fn default_batch_size() -> usize {
    32
}
fn default_method() -> MethodName {
    MethodName::KdPdfl
}
fn default_broadcast_rule() -> BroadcastRule {
    BroadcastRule::Blend
}
fn default_confidence_mode() -> ConfidenceMode {
    ConfidenceMode::Standard
}
fn default_n_repeats() -> usize {
    3
}
fn default_master_seed() -> u64 {
    42
}
fn default_output_dir() -> String {
    "runs/experiment".into()
}

impl ExperimentConfig {
    pub fn probe_comparison(&self) -> ProbeComparison {
        if self.compare_presoftmax {
            ProbeComparison::RawLogits
        } else {
            ProbeComparison::Softmax
        }
    }

    pub fn resolved_t_switch(&self) -> u64 {
        self.t_switch.unwrap_or(self.t_max / 2)
    }

    /// Staleness horizon in iterations; `None` is unlimited.
    pub fn resolved_staleness(&self) -> Option<u64> {
        match self.staleness_horizon {
            StalenessConfig::Steps(n) => Some(n),
            StalenessConfig::Mode(StalenessMode::ExchangeInterval) => Some(self.t_ex),
            StalenessConfig::Mode(StalenessMode::Unlimited) => None,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.m < 2 {
            bail!("m: must be >= 2");
        }
        match &self.dataset {
            DatasetSpec::Synthetic(s) => {
                if s.n_classes < 2 {
                    bail!("dataset.synthetic.n_classes: must be >= 2");
                }
                if s.n_clusters < 1 || s.n_clusters > s.n_classes {
                    bail!("dataset.synthetic.n_clusters: must be in [1, n_classes]");
                }
                if s.samples_per_class < 1 {
                    bail!("dataset.synthetic.samples_per_class: must be >= 1");
                }
            }
            DatasetSpec::Csv(c) => {
                if c.path.is_empty() {
                    bail!("dataset.csv.path: must be nonempty");
                }
                if c.label_column.is_empty() {
                    bail!("dataset.csv.label_column: must be nonempty");
                }
            }
        }
        if !(self.partition.dirichlet_alpha > 0.0) {
            bail!("partition.dirichlet_alpha: must be > 0");
        }
        if self.partition.min_train < 1 || self.partition.min_train > self.partition.max_train {
            bail!("partition.min_train: require 1 <= min_train <= max_train");
        }
        if self.partition.test_per_client < 1 {
            bail!("partition.test_per_client: must be >= 1");
        }
        if self.architecture.hidden_dims.iter().any(|&d| d < 1) {
            bail!("architecture.hidden_dims: all dimensions must be >= 1");
        }
        if self.t_max < 1 {
            bail!("t_max: must be >= 1");
        }
        if self.t_ex < 2 {
            bail!("t_ex: must be >= 2 (exchange and broadcast phases collide at t_ex = 1)");
        }
        if !(self.local_lr > 0.0) {
            bail!("local_lr: must be > 0");
        }
        if self.batch_size < 1 {
            bail!("batch_size: must be >= 1");
        }
        if self.probe_batch_size < 1 {
            bail!("probe_batch_size: must be >= 1");
        }
        if self.regularizer.mu1 < 0.0 {
            bail!("regularizer.mu1: must be >= 0");
        }
        if self.regularizer.mu2 < 0.0 {
            bail!("regularizer.mu2: must be >= 0");
        }
        if !(self.regularizer.epsilon > 0.0) {
            bail!("regularizer.epsilon: must be > 0");
        }
        if !(self.regularizer.eta_w > 0.0) {
            bail!("regularizer.eta_w: must be > 0");
        }
        if let Some(c) = self.c_base {
            if !(c > 0.0) {
                bail!("c_base: must be > 0 (or null for automatic)");
            }
        }
        if !(self.channel.target_mean_neighbors > 0.0)
            || self.channel.target_mean_neighbors > (self.m - 1) as f64
        {
            bail!(
                "channel.target_mean_neighbors: must be in (0, {}]",
                self.m - 1
            );
        }
        if let Some(k) = self.channel.max_neighbors {
            if k < 1 {
                bail!("channel.max_neighbors: must be >= 1 (or null for m - 1)");
            }
        }
        if !(0.0..1.0).contains(&self.channel.packet_loss) {
            bail!("channel.packet_loss: must be in [0, 1)");
        }
        if self.method == MethodName::FedavgPlus && self.resolved_t_switch() >= self.t_max {
            bail!("t_switch: must be < t_max for fedavg_plus");
        }
        if !(0.0..=1.0).contains(&self.reptile.beta) {
            bail!("reptile.beta: must be in [0, 1]");
        }
        if self.reptile.inner_steps < 1 {
            bail!("reptile.inner_steps: must be >= 1");
        }
        if self.n_repeats < 1 {
            bail!("n_repeats: must be >= 1");
        }
        Ok(())
    }
}

/// Parses and fully validates a config file.
pub fn parse_config(path: impl AsRef<Path>) -> anyhow::Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let config: ExperimentConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    config
        .validate()
        .with_context(|| format!("validating config {}", path.display()))?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn minimal_config_fills_defaults_and_round_trips() {
        let f = write_config(r#"{"dataset": {"synthetic": {}}, "m": 10}"#);
        let cfg = parse_config(f.path()).unwrap();
        assert_eq!(cfg.t_max, 2000);
        assert_eq!(cfg.t_ex, 5);
        assert_eq!(cfg.method, MethodName::KdPdfl);
        assert_eq!(cfg.n_repeats, 3);
        assert!(cfg.c_base.is_none());

        let echoed = serde_json::to_string_pretty(&cfg).unwrap();
        let f2 = write_config(&echoed);
        let reparsed = parse_config(f2.path()).unwrap();
        assert_eq!(cfg, reparsed);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let f = write_config(r#"{"dataset": {"synthetic": {}}, "m": 10, "learning_rate": 0.1}"#);
        let err = parse_config(f.path()).unwrap_err();
        assert!(format!("{:#}", err).contains("unknown field"));
    }

    #[test]
    fn negative_mu1_is_rejected_with_constraint() {
        let f = write_config(
            r#"{"dataset": {"synthetic": {}}, "m": 10, "regularizer": {"mu1": -1.0}}"#,
        );
        let err = format!("{:#}", parse_config(f.path()).unwrap_err());
        assert!(err.contains("regularizer.mu1"), "{}", err);
        assert!(err.contains(">= 0"), "{}", err);
    }

    #[test]
    fn unit_exchange_interval_is_rejected() {
        let f = write_config(r#"{"dataset": {"synthetic": {}}, "m": 10, "t_ex": 1}"#);
        let err = format!("{:#}", parse_config(f.path()).unwrap_err());
        assert!(err.contains("t_ex"), "{}", err);
        assert!(err.contains("collide"), "{}", err);
    }

    #[test]
    fn fedavg_plus_needs_valid_switch_point() {
        let f = write_config(
            r#"{"dataset": {"synthetic": {}}, "m": 10, "method": "fedavg_plus", "t_switch": 2000}"#,
        );
        assert!(parse_config(f.path()).is_err());
        // default switch point t_max/2 passes
        let f =
            write_config(r#"{"dataset": {"synthetic": {}}, "m": 10, "method": "fedavg_plus"}"#);
        let cfg = parse_config(f.path()).unwrap();
        assert_eq!(cfg.resolved_t_switch(), 1000);
    }
}
