//! Discrete-time protocol engine. One logical timeline runs three phases per
//! exchange cycle: at `t = 0 mod T_ex` a random star node pulls models from
//! reachable peers, scores them on its own data, updates its connectivity
//! vector, and mixes; at `t = 1 mod T_ex` it broadcasts back to the same
//! peers; every other tick is one local SGD step on every client. The
//! baselines (local-only, equal averaging, averaging plus fine-tuning) run
//! on the same skeleton.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_neighbors, ChannelModel};
use crate::collab::{
    confidence, conn_vector_update, mix_models, ConnectivityVector, FootprintCache, MixWeights,
    RegularizerConfig,
};
use crate::data::ClientData;
use crate::distill::{distance_vector, DistillationProbe, ProbeComparison};
use crate::error::{Error, Result};
use crate::nn::{self, Architecture, ParamVector};
use crate::rng::{derive_stream, StreamPurpose};
use crate::scalar::Scalar;

/// What a receiving neighbor does with the star's broadcast model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BroadcastRule {
    /// Receiver adopts the star's model verbatim.
    Overwrite,
    /// Receiver keeps a confidence-weighted share of its own model.
    Blend,
}

/// How the star's self-weight is computed at mixing time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceMode {
    /// `min(n_train / c_base, 1 / (neighbors + 1))`.
    Standard,
    /// Forced to `1 / (neighbors + 1)`, the equal-averaging share.
    ForcedNeighborShare,
}

/// Simulation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    KdPdfl,
    LocalOnly,
    FedAvg,
    FedAvgPlus { t_switch: u64 },
}

/// Baseline selector mirroring [`Method`] without the primary algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    LocalOnly,
    FedAvg,
    FedAvgPlus { t_switch: u64 },
}

/// All hyperparameters of one simulation run.
#[derive(Debug, Clone)]
pub struct SimConfig<S> {
    /// Total iterations `T`; the loop runs `t = 1..=T`.
    pub t_max: u64,
    /// Exchange interval. Exchange at `t = 0 mod T_ex`, broadcast at
    /// `t = 1 mod T_ex`, local training otherwise.
    pub t_ex: u64,
    pub local_lr: S,
    pub batch_size: usize,
    pub probe_batch_size: usize,
    pub probe_comparison: ProbeComparison,
    pub reg: RegularizerConfig<S>,
    /// Base confidence constant.
    pub c_base: S,
    pub channel: ChannelModel,
    /// Per-message drop probability.
    pub packet_loss: f64,
    pub broadcast_rule: BroadcastRule,
    /// Footprints older than this many iterations are dropped before mixing.
    pub staleness_horizon: Option<u64>,
    pub confidence_mode: ConfidenceMode,
    /// Interpolation factor of the fine-tuning outer step.
    pub reptile_beta: f64,
    /// Local steps per fine-tuning block.
    pub reptile_inner_steps: u64,
    pub master_seed: u64,
}

impl<S: Scalar> SimConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if self.t_ex < 2 {
            return Err(Error::InvalidConfig(
                "t_ex must be >= 2 (exchange and broadcast phases collide at t_ex = 1)".into(),
            ));
        }
        if self.t_max < 1 {
            return Err(Error::InvalidConfig("t_max must be >= 1".into()));
        }
        if !(self.local_lr > S::zero()) {
            return Err(Error::InvalidConfig("local_lr must be > 0".into()));
        }
        if self.batch_size < 1 || self.probe_batch_size < 1 {
            return Err(Error::InvalidConfig(
                "batch sizes must be >= 1".into(),
            ));
        }
        if !(self.c_base > S::zero()) {
            return Err(Error::InvalidConfig("c_base must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.packet_loss) {
            return Err(Error::InvalidConfig(
                "packet_loss must be in [0, 1)".into(),
            ));
        }
        if self.reg.mu1 < S::zero() || self.reg.mu2 < S::zero() {
            return Err(Error::InvalidConfig("mu1 and mu2 must be >= 0".into()));
        }
        if !(self.reg.epsilon > S::zero()) || !(self.reg.eta_w > S::zero()) {
            return Err(Error::InvalidConfig(
                "epsilon and eta_w must be > 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.reptile_beta) || self.reptile_inner_steps < 1 {
            return Err(Error::InvalidConfig(
                "reptile_beta in [0,1], reptile_inner_steps >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Protocol phase of one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Exchange,
    Broadcast,
    Local,
}

/// Phase of iteration `t` under exchange interval `t_ex`.
pub fn phase_at(t: u64, t_ex: u64) -> Phase {
    debug_assert!(t_ex >= 2);
    match t % t_ex {
        0 => Phase::Exchange,
        1 => Phase::Broadcast,
        _ => Phase::Local,
    }
}

/// One client's full private state during a run.
#[derive(Debug, Clone)]
pub struct ClientRuntime<S> {
    pub id: usize,
    pub data: ClientData<S>,
    pub model: ParamVector<S>,
    pub collab: ConnectivityVector<S>,
    pub cache: FootprintCache<S>,
    pub data_rng: ChaCha8Rng,
    pub local_lr: S,
    pub last_confidence: f64,
}

impl<S: Scalar> ClientRuntime<S> {
    pub fn new(
        id: usize,
        data: ClientData<S>,
        model: ParamVector<S>,
        local_lr: S,
        data_rng: ChaCha8Rng,
        m: usize,
    ) -> Self {
        Self {
            id,
            data,
            model,
            collab: ConnectivityVector::uniform(id, m),
            cache: FootprintCache::new(id),
            data_rng,
            local_lr,
            last_confidence: 0.0,
        }
    }
}

/// Builds the client fleet with per-client derived RNG streams.
///
/// Every client starts from the same random initialization: the protocol
/// initializes all models at one shared point, and parameter mixing across
/// peers stays meaningful only when models share that starting basin.
pub fn build_clients<S: Scalar>(
    data: Vec<ClientData<S>>,
    arch: &Architecture,
    local_lr: S,
    master_seed: u64,
) -> Result<Vec<ClientRuntime<S>>> {
    let m = data.len();
    let init_seed = derive_stream(master_seed, StreamPurpose::Init, 0).gen();
    let shared_init: ParamVector<S> = nn::init_model(arch, init_seed)?;
    data.into_iter()
        .enumerate()
        .map(|(id, d)| {
            if d.client_id != id {
                return Err(Error::InvalidInput(format!(
                    "client data {} out of order at position {}",
                    d.client_id, id
                )));
            }
            let data_rng = derive_stream(master_seed, StreamPurpose::LocalBatches, id as u64);
            Ok(ClientRuntime::new(
                id,
                d,
                shared_init.clone(),
                local_lr,
                data_rng,
                m,
            ))
        })
        .collect()
}

/// Which split a metrics row refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub t: u64,
    pub client_id: usize,
    pub split: Split,
    pub loss: f64,
    pub accuracy: f64,
}

/// The only payload kind that ever crosses a client boundary. Datasets,
/// label statistics, and connectivity weights have no message representation
/// at all, which makes the privacy boundary structural.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    ModelParameters,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub t: u64,
    pub from: usize,
    pub to: usize,
    pub payload_kind: PayloadKind,
}

/// What happened at one exchange event, including the normalized mixing
/// vector that was applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeEvent {
    pub t: u64,
    pub star: usize,
    pub sampled: Vec<usize>,
    pub delivered: Vec<usize>,
    pub confidence: f64,
    pub mix_self: f64,
    pub mix_peers: Vec<(usize, f64)>,
    /// Peer distances measured this event (empty for methods that skip
    /// distillation).
    pub distances: Vec<(usize, f64)>,
}

/// Collaboration matrix snapshot: raw peer weights per row plus each
/// client's confidence at snapshot time.
#[derive(Debug, Clone, PartialEq)]
pub struct WSnapshot {
    pub t: u64,
    pub rows: Vec<Vec<f64>>,
    pub confidences: Vec<f64>,
}

/// Per-client end-of-run state summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientStateSummary {
    pub client_id: usize,
    pub collab_weights: Vec<f64>,
    /// `(peer, received_at)` for every cached footprint.
    pub cache_entries: Vec<(usize, u64)>,
    pub last_confidence: f64,
}

#[derive(Debug, Clone)]
pub struct SimResult<S> {
    pub metrics: Vec<MetricsRecord>,
    pub final_models: Vec<ParamVector<S>>,
    /// Absent for local-only runs (no collaboration state).
    pub final_w: Option<WSnapshot>,
    pub w_snapshots: Vec<WSnapshot>,
    pub schedule_log: Vec<ExchangeEvent>,
    pub messages: Vec<MessageRecord>,
    pub final_state: Vec<ClientStateSummary>,
}

/// Per-client evaluation on the local test set (eval mode).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientEval {
    pub client_id: usize,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

/// Loss and argmax accuracy of a model on a dataset, in eval mode.
pub fn evaluate_on<S: Scalar>(
    model: &ParamVector<S>,
    data: &crate::data::Dataset<S>,
) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate on empty split".into()));
    }
    let batch = data.as_batch();
    let (logits, loss) = nn::forward(model, &batch, false)?;
    let mut correct = 0usize;
    for (i, &label) in batch.labels.iter().enumerate() {
        let row = logits.row(i);
        let mut best = 0usize;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        if best == label {
            correct += 1;
        }
    }
    Ok((loss.into_f64(), correct as f64 / batch.len() as f64))
}

/// Evaluates every client on its own test set.
pub fn evaluate<S: Scalar>(clients: &[ClientRuntime<S>]) -> Result<Vec<ClientEval>> {
    clients
        .iter()
        .map(|c| {
            let (test_loss, test_accuracy) = evaluate_on(&c.model, &c.data.test)?;
            Ok(ClientEval {
                client_id: c.id,
                test_loss,
                test_accuracy,
            })
        })
        .collect()
}

/// Runs the distillation-based personalized protocol.
pub fn run_kd_pdfl<S: Scalar>(
    clients: Vec<ClientRuntime<S>>,
    cfg: &SimConfig<S>,
) -> Result<SimResult<S>> {
    run(clients, cfg, Method::KdPdfl)
}

/// Runs one of the reference baselines on the same protocol skeleton.
pub fn run_baseline<S: Scalar>(
    clients: Vec<ClientRuntime<S>>,
    cfg: &SimConfig<S>,
    baseline: Baseline,
) -> Result<SimResult<S>> {
    let method = match baseline {
        Baseline::LocalOnly => Method::LocalOnly,
        Baseline::FedAvg => Method::FedAvg,
        Baseline::FedAvgPlus { t_switch } => {
            if t_switch >= cfg.t_max {
                return Err(Error::InvalidConfig(
                    "t_switch must be < t_max for fedavg_plus".into(),
                ));
            }
            Method::FedAvgPlus { t_switch }
        }
    };
    run(clients, cfg, method)
}

/// Equal-averaging star update: cached footprints keep the frozen uniform
/// weight `1/M`, the self share is `1/(neighbors+1)`, and the vector is
/// normalized. No distillation, no connectivity update.
fn fedavg_mix<S: Scalar>(
    own: &ParamVector<S>,
    m: usize,
    cache: &FootprintCache<S>,
    conf: S,
) -> Result<(ParamVector<S>, MixWeights<S>)> {
    let uniform = S::one() / S::from_f64_lossy(m as f64);
    let raw: Vec<(usize, S)> = cache.entries.keys().map(|&j| (j, uniform)).collect();
    let total = conf + raw.iter().map(|&(_, v)| v).sum::<S>();
    if !(total > S::zero()) {
        return Err(Error::NoMixingMass);
    }
    let mix = MixWeights {
        self_weight: conf / total,
        peers: raw.into_iter().map(|(j, v)| (j, v / total)).collect(),
    };
    let mut terms: Vec<(S, &ParamVector<S>)> = Vec::with_capacity(mix.peers.len() + 1);
    terms.push((mix.self_weight, own));
    for &(j, wj) in &mix.peers {
        terms.push((wj, &cache.entries[&j].model));
    }
    let mixed = nn::combine(&terms)?;
    Ok((mixed, mix))
}

fn draw_minibatch<S: Scalar>(client: &mut ClientRuntime<S>, batch_size: usize) -> crate::nn::Batch<S> {
    let n = client.data.train.len();
    let take = batch_size.min(n);
    let indices = rand::seq::index::sample(&mut client.data_rng, n, take).into_vec();
    client.data.train.batch_of(&indices)
}

fn effective_phase(method: Method, t: u64, t_ex: u64) -> Phase {
    match method {
        Method::LocalOnly => Phase::Local,
        Method::FedAvgPlus { t_switch } if t > t_switch => Phase::Local,
        _ => phase_at(t, t_ex),
    }
}

fn run<S: Scalar>(
    mut clients: Vec<ClientRuntime<S>>,
    cfg: &SimConfig<S>,
    method: Method,
) -> Result<SimResult<S>> {
    cfg.validate()?;
    let m = clients.len();
    if m < 2 {
        return Err(Error::InvalidConfig("simulation needs at least 2 clients".into()));
    }
    let arch = clients[0].model.arch().clone();
    for c in &clients {
        if c.model.arch() != &arch {
            return Err(Error::InvalidConfig(
                "all clients must share one architecture".into(),
            ));
        }
    }
    if let Method::FedAvgPlus { t_switch } = method {
        if t_switch >= cfg.t_max {
            return Err(Error::InvalidConfig(
                "t_switch must be < t_max for fedavg_plus".into(),
            ));
        }
    }

    let mut star_rng = derive_stream(cfg.master_seed, StreamPurpose::Star, 0);
    let mut channel_rng = derive_stream(cfg.master_seed, StreamPurpose::Channel, 0);
    let mut probe_rng = derive_stream(cfg.master_seed, StreamPurpose::Probe, 0);

    for c in clients.iter_mut() {
        c.last_confidence = confidence(c.data.train.len(), 0, cfg.c_base).into_f64();
    }

    let mut star_history: BTreeMap<u64, (usize, Vec<usize>)> = BTreeMap::new();
    let mut schedule_log: Vec<ExchangeEvent> = Vec::new();
    let mut messages: Vec<MessageRecord> = Vec::new();
    let mut metrics: Vec<MetricsRecord> = Vec::new();
    let mut w_snapshots: Vec<WSnapshot> = Vec::new();
    let mut reptile_anchor: Vec<Option<ParamVector<S>>> = vec![None; m];
    let mut reptile_steps: Vec<u64> = vec![0; m];

    for t in 1..=cfg.t_max {
        match effective_phase(method, t, cfg.t_ex) {
            Phase::Exchange => {
                let star = star_rng.gen_range(0..m);
                let sampled = sample_neighbors(&cfg.channel, star, m, &mut channel_rng);
                let delivered: Vec<usize> = sampled
                    .iter()
                    .copied()
                    .filter(|_| {
                        cfg.packet_loss == 0.0 || channel_rng.gen::<f64>() >= cfg.packet_loss
                    })
                    .collect();

                for &j in &delivered {
                    messages.push(MessageRecord {
                        t,
                        from: j,
                        to: star,
                        payload_kind: PayloadKind::ModelParameters,
                    });
                    let model_j = clients[j].model.clone();
                    clients[star].cache.insert(j, model_j, t);
                }
                clients[star].cache.retain_fresh(t, cfg.staleness_horizon);

                let n_train = clients[star].data.train.len();
                let conf = match (method, cfg.confidence_mode) {
                    (Method::FedAvg, _)
                    | (Method::FedAvgPlus { .. }, _)
                    | (_, ConfidenceMode::ForcedNeighborShare) => {
                        S::one() / S::from_f64_lossy((delivered.len() + 1) as f64)
                    }
                    (_, ConfidenceMode::Standard) => {
                        confidence(n_train, delivered.len(), cfg.c_base)
                    }
                };

                let mut distances: Vec<(usize, f64)> = Vec::new();
                let (mix_self, mix_peers) = if delivered.is_empty() {
                    // solitary round: no distance, no mixing beyond self
                    (1.0, Vec::new())
                } else {
                    match method {
                        Method::KdPdfl => {
                            let probe_batch = {
                                let train = &clients[star].data.train;
                                let take = cfg.probe_batch_size.min(train.len());
                                let idx =
                                    rand::seq::index::sample(&mut probe_rng, train.len(), take)
                                        .into_vec();
                                train.batch_of(&idx)
                            };
                            let probe = DistillationProbe::new(probe_batch)
                                .map_err(|e| e.in_sim(t, star, "exchange"))?;
                            let (new_collab, d) = {
                                let c = &clients[star];
                                let footprints: BTreeMap<usize, &ParamVector<S>> = delivered
                                    .iter()
                                    .map(|&j| (j, &c.cache.entries[&j].model))
                                    .collect();
                                let d = distance_vector(
                                    star,
                                    &footprints,
                                    &c.model,
                                    &probe,
                                    cfg.probe_comparison,
                                )
                                .map_err(|e| e.in_sim(t, star, "exchange"))?;
                                let new_collab = conn_vector_update(&c.collab, &d, &cfg.reg)
                                    .map_err(|e| e.in_sim(t, star, "exchange"))?;
                                (new_collab, d)
                            };
                            distances = d
                                .entries
                                .iter()
                                .map(|(&j, &v)| (j, v.into_f64()))
                                .collect();
                            clients[star].collab = new_collab;
                            let (mixed, mw) = {
                                let c = &clients[star];
                                mix_models(&c.model, &c.collab, &c.cache, conf)
                                    .map_err(|e| e.in_sim(t, star, "exchange"))?
                            };
                            clients[star].model = mixed;
                            (
                                mw.self_weight.into_f64(),
                                mw.peers.iter().map(|&(j, w)| (j, w.into_f64())).collect(),
                            )
                        }
                        Method::FedAvg | Method::FedAvgPlus { .. } => {
                            let (mixed, mw) = {
                                let c = &clients[star];
                                fedavg_mix(&c.model, m, &c.cache, conf)
                                    .map_err(|e| e.in_sim(t, star, "exchange"))?
                            };
                            clients[star].model = mixed;
                            (
                                mw.self_weight.into_f64(),
                                mw.peers.iter().map(|&(j, w)| (j, w.into_f64())).collect(),
                            )
                        }
                        Method::LocalOnly => unreachable!("local-only never exchanges"),
                    }
                };

                clients[star].last_confidence = conf.into_f64();
                star_history.insert(t, (star, delivered.clone()));
                schedule_log.push(ExchangeEvent {
                    t,
                    star,
                    sampled,
                    delivered,
                    confidence: conf.into_f64(),
                    mix_self,
                    mix_peers,
                    distances,
                });
            }
            Phase::Broadcast => {
                if let Some((star, peers)) = star_history.get(&(t - 1)).cloned() {
                    // equal-averaging baselines build one shared model, so
                    // their receivers always adopt the broadcast verbatim
                    let rule = match method {
                        Method::FedAvg | Method::FedAvgPlus { .. } => BroadcastRule::Overwrite,
                        _ => cfg.broadcast_rule,
                    };
                    let star_model = clients[star].model.clone();
                    for &j in &peers {
                        if cfg.packet_loss > 0.0 && channel_rng.gen::<f64>() < cfg.packet_loss {
                            continue;
                        }
                        messages.push(MessageRecord {
                            t,
                            from: star,
                            to: j,
                            payload_kind: PayloadKind::ModelParameters,
                        });
                        match rule {
                            BroadcastRule::Overwrite => {
                                clients[j].model = star_model.clone();
                            }
                            BroadcastRule::Blend => {
                                // receiver keeps its solitary-round confidence
                                // share of its own model
                                let c_j = confidence(clients[j].data.train.len(), 0, cfg.c_base);
                                let blended = nn::combine(&[
                                    (S::one() - c_j, &star_model),
                                    (c_j, &clients[j].model),
                                ])
                                .map_err(|e| e.in_sim(t, j, "broadcast"))?;
                                clients[j].model = blended;
                            }
                        }
                    }
                }
            }
            Phase::Local => {
                let fine_tuning = matches!(method, Method::FedAvgPlus { t_switch } if t > t_switch);
                for i in 0..m {
                    if fine_tuning && reptile_anchor[i].is_none() {
                        reptile_anchor[i] = Some(clients[i].model.clone());
                        reptile_steps[i] = 0;
                    }
                    let batch = draw_minibatch(&mut clients[i], cfg.batch_size);
                    let (updated, _loss) = nn::train_step(&clients[i].model, &batch, cfg.local_lr)
                        .map_err(|e| e.in_sim(t, i, "local"))?;
                    clients[i].model = updated;
                    if fine_tuning {
                        reptile_steps[i] += 1;
                        if reptile_steps[i] >= cfg.reptile_inner_steps {
                            let beta = S::from_f64_lossy(cfg.reptile_beta);
                            let anchor = reptile_anchor[i].take().expect("anchor set");
                            let interpolated = nn::combine(&[
                                (S::one() - beta, &anchor),
                                (beta, &clients[i].model),
                            ])
                            .map_err(|e| e.in_sim(t, i, "local"))?;
                            clients[i].model = interpolated;
                            reptile_anchor[i] = Some(clients[i].model.clone());
                            reptile_steps[i] = 0;
                        }
                    }
                }
            }
        }

        if t % cfg.t_ex == 0 || t == cfg.t_max {
            for c in &clients {
                let (loss, accuracy) = evaluate_on(&c.model, &c.data.test)
                    .map_err(|e| e.in_sim(t, c.id, "evaluate"))?;
                metrics.push(MetricsRecord {
                    t,
                    client_id: c.id,
                    split: Split::Test,
                    loss,
                    accuracy,
                });
                if !c.data.validation.is_empty() {
                    let (loss, accuracy) = evaluate_on(&c.model, &c.data.validation)
                        .map_err(|e| e.in_sim(t, c.id, "evaluate"))?;
                    metrics.push(MetricsRecord {
                        t,
                        client_id: c.id,
                        split: Split::Val,
                        loss,
                        accuracy,
                    });
                }
            }
            if method != Method::LocalOnly {
                w_snapshots.push(snapshot_w(t, &clients));
            }
        }
    }

    let final_w = w_snapshots.last().cloned();
    let final_state = clients
        .iter()
        .map(|c| ClientStateSummary {
            client_id: c.id,
            collab_weights: c.collab.weights.iter().map(|w| w.into_f64()).collect(),
            cache_entries: c
                .cache
                .entries
                .iter()
                .map(|(&j, f)| (j, f.received_at))
                .collect(),
            last_confidence: c.last_confidence,
        })
        .collect();
    Ok(SimResult {
        metrics,
        final_models: clients.into_iter().map(|c| c.model).collect(),
        final_w,
        w_snapshots,
        schedule_log,
        messages,
        final_state,
    })
}

fn snapshot_w<S: Scalar>(t: u64, clients: &[ClientRuntime<S>]) -> WSnapshot {
    WSnapshot {
        t,
        rows: clients
            .iter()
            .map(|c| c.collab.weights.iter().map(|w| w.into_f64()).collect())
            .collect(),
        confidences: clients.iter().map(|c| c.last_confidence).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{dirichlet_partition, generate_synthetic, PartitionSpec};

    fn small_setup(
        m: usize,
        seed: u64,
    ) -> (Vec<ClientRuntime<f64>>, Architecture, SimConfig<f64>) {
        let synth = generate_synthetic::<f64>(6, 8, 2, 400, seed).unwrap();
        let spec = PartitionSpec {
            m,
            dirichlet_alpha: 0.3,
            min_train: 15,
            max_train: 40,
            test_per_client: 30,
            seed: seed + 1,
        };
        let (data, _) = dirichlet_partition(&synth.dataset, &spec).unwrap();
        let arch = Architecture::new(8, vec![8], 6, true).unwrap();
        let clients = build_clients(data, &arch, 0.05, seed + 2).unwrap();
        let cfg = SimConfig {
            t_max: 40,
            t_ex: 5,
            local_lr: 0.05,
            batch_size: 16,
            probe_batch_size: 16,
            probe_comparison: ProbeComparison::Softmax,
            reg: RegularizerConfig::default(),
            c_base: 120.0,
            channel: ChannelModel::rayleigh(m, 3.0_f64.min((m - 1) as f64), None).unwrap(),
            packet_loss: 0.0,
            broadcast_rule: BroadcastRule::Overwrite,
            staleness_horizon: None,
            confidence_mode: ConfidenceMode::Standard,
            reptile_beta: 0.5,
            reptile_inner_steps: 10,
            master_seed: seed + 3,
        };
        (clients, arch, cfg)
    }

    #[test]
    fn schedule_arithmetic_matches_the_protocol() {
        let (clients, _, mut cfg) = small_setup(4, 60);
        cfg.t_max = 10;
        cfg.t_ex = 5;
        let result = run_kd_pdfl(clients, &cfg).unwrap();
        let exchange_ts: Vec<u64> = result.schedule_log.iter().map(|e| e.t).collect();
        assert_eq!(exchange_ts, vec![5, 10]);
        // broadcast messages only at t = 6 (t = 11 is out of range)
        let broadcast_ts: Vec<u64> = result
            .messages
            .iter()
            .filter(|msg| msg.t % cfg.t_ex == 1)
            .map(|msg| msg.t)
            .collect();
        assert!(broadcast_ts.iter().all(|&t| t == 6));
    }

    #[test]
    fn phase_derivation_is_exclusive_and_total() {
        for t in 1..=200u64 {
            for t_ex in [2u64, 3, 5, 20] {
                let phases = [
                    (t % t_ex == 0, Phase::Exchange),
                    (t % t_ex == 1, Phase::Broadcast),
                ];
                let expected = phases
                    .iter()
                    .find(|(cond, _)| *cond)
                    .map(|&(_, p)| p)
                    .unwrap_or(Phase::Local);
                assert_eq!(phase_at(t, t_ex), expected);
            }
        }
    }

    #[test]
    fn determinism_same_seed_same_result() {
        let (clients_a, _, cfg) = small_setup(5, 70);
        let (clients_b, _, _) = small_setup(5, 70);
        let a = run_kd_pdfl(clients_a, &cfg).unwrap();
        let b = run_kd_pdfl(clients_b, &cfg).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.schedule_log, b.schedule_log);
        for (x, y) in a.final_models.iter().zip(&b.final_models) {
            assert_eq!(x.values(), y.values());
        }
    }

    #[test]
    fn local_only_is_channel_independent() {
        let (clients_a, _, mut cfg_a) = small_setup(5, 80);
        let (clients_b, _, mut cfg_b) = small_setup(5, 80);
        cfg_a.channel = ChannelModel::rayleigh(5, 1.0, Some(1)).unwrap();
        cfg_b.channel = ChannelModel::rayleigh(5, 4.0, None).unwrap();
        cfg_b.packet_loss = 0.5;
        let a = run_baseline(clients_a, &cfg_a, Baseline::LocalOnly).unwrap();
        let b = run_baseline(clients_b, &cfg_b, Baseline::LocalOnly).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert!(a.final_w.is_none());
        assert!(a.messages.is_empty());
        assert!(a.schedule_log.is_empty());
    }

    #[test]
    fn identical_twins_match_solo_local_trajectory() {
        // two clients with identical data, init, and batch streams: distances
        // are zero at every exchange and the trajectory equals local training
        // driven by the same batch sequence (with protocol slots skipped)
        let synth = generate_synthetic::<f64>(4, 6, 2, 200, 90).unwrap();
        let spec = PartitionSpec {
            m: 2,
            dirichlet_alpha: 10.0,
            min_train: 30,
            max_train: 30,
            test_per_client: 20,
            seed: 91,
        };
        let (data, _) = dirichlet_partition(&synth.dataset, &spec).unwrap();
        let arch = Architecture::new(6, vec![6], 4, true).unwrap();

        let shared = data[0].clone();
        let mut twin = shared.clone();
        twin.client_id = 1;
        let model = nn::init_model::<f64>(&arch, 7).unwrap();
        let rng = derive_stream(999, StreamPurpose::LocalBatches, 0);
        let clients = vec![
            ClientRuntime::new(0, shared.clone(), model.clone(), 0.05, rng.clone(), 2),
            ClientRuntime::new(1, { let mut d = shared.clone(); d.client_id = 1; d }, model.clone(), 0.05, rng.clone(), 2),
        ];

        let cfg = SimConfig {
            t_max: 30,
            t_ex: 5,
            local_lr: 0.05,
            batch_size: 8,
            probe_batch_size: 8,
            probe_comparison: ProbeComparison::Softmax,
            reg: RegularizerConfig::default(),
            c_base: 120.0,
            channel: ChannelModel::rayleigh(2, 1.0, None).unwrap(),
            packet_loss: 0.0,
            broadcast_rule: BroadcastRule::Overwrite,
            staleness_horizon: None,
            confidence_mode: ConfidenceMode::Standard,
            reptile_beta: 0.5,
            reptile_inner_steps: 10,
            master_seed: 999,
        };
        let result = run_kd_pdfl(clients, &cfg).unwrap();

        for event in &result.schedule_log {
            for &(_, d) in &event.distances {
                assert!(d.abs() < 1e-12, "twin distance {} at t={}", d, event.t);
            }
        }

        // reference: solo local training over the same stream, skipping
        // protocol slots exactly like the engine does
        let mut reference = model;
        let mut rng = derive_stream(999, StreamPurpose::LocalBatches, 0);
        for t in 1..=cfg.t_max {
            if phase_at(t, cfg.t_ex) != Phase::Local {
                continue;
            }
            let idx = rand::seq::index::sample(&mut rng, shared.train.len(), 8).into_vec();
            let batch = shared.train.batch_of(&idx);
            let (m, _) = nn::train_step(&reference, &batch, 0.05).unwrap();
            reference = m;
        }
        for (a, b) in result.final_models[0].values().iter().zip(reference.values()) {
            assert!(
                (a - b).abs() < 1e-9,
                "twin trajectory deviates: {} vs {}",
                a,
                b
            );
        }
    }

    #[test]
    fn fedavg_reduction_mixing_vectors_match() {
        // mu1 = mu2 = 0 with the neighbor-share confidence equals the
        // equal-averaging baseline event by event
        let (clients_a, _, mut cfg) = small_setup(6, 100);
        let (clients_b, _, _) = small_setup(6, 100);
        cfg.reg.mu1 = 0.0;
        cfg.reg.mu2 = 0.0;
        cfg.confidence_mode = ConfidenceMode::ForcedNeighborShare;
        let kd = run_kd_pdfl(clients_a, &cfg).unwrap();
        let fedavg = run_baseline(clients_b, &cfg, Baseline::FedAvg).unwrap();

        assert_eq!(kd.schedule_log.len(), fedavg.schedule_log.len());
        assert!(!kd.schedule_log.is_empty());
        for (a, b) in kd.schedule_log.iter().zip(&fedavg.schedule_log) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.star, b.star);
            assert_eq!(a.delivered, b.delivered);
            assert_eq!(a.mix_self, b.mix_self);
            assert_eq!(a.mix_peers, b.mix_peers);
        }
        assert_eq!(kd.metrics, fedavg.metrics);
    }

    #[test]
    fn mixing_vectors_sum_to_one_at_every_event() {
        let (clients, _, cfg) = small_setup(6, 110);
        let result = run_kd_pdfl(clients, &cfg).unwrap();
        assert!(!result.schedule_log.is_empty());
        for e in &result.schedule_log {
            let total: f64 = e.mix_self + e.mix_peers.iter().map(|&(_, w)| w).sum::<f64>();
            assert!(
                (total - 1.0).abs() <= 1e-9,
                "mixing vector sums to {} at t={}",
                total,
                e.t
            );
        }
    }

    #[test]
    fn privacy_audit_only_model_parameters_cross_clients() {
        let (clients, _, cfg) = small_setup(6, 120);
        let result = run_kd_pdfl(clients, &cfg).unwrap();
        assert!(!result.messages.is_empty());
        for msg in &result.messages {
            assert_eq!(msg.payload_kind, PayloadKind::ModelParameters);
        }
    }

    #[test]
    fn footprints_are_fresh() {
        // every cache entry's received_at is an exchange event where the
        // peer was in the delivered set of that star
        let (clients, _, cfg) = small_setup(6, 130);
        let result = run_kd_pdfl(clients, &cfg).unwrap();
        let by_t: BTreeMap<u64, &ExchangeEvent> =
            result.schedule_log.iter().map(|e| (e.t, e)).collect();
        let mut checked = 0;
        for state in &result.final_state {
            for &(peer, received_at) in &state.cache_entries {
                let event = by_t.get(&received_at).expect("cache entry from an exchange event");
                assert_eq!(event.star, state.client_id);
                assert!(event.delivered.contains(&peer));
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn solitary_rounds_leave_the_star_untouched() {
        let (clients, _, mut cfg) = small_setup(5, 140);
        // drive the threshold up so empty draws happen regularly
        cfg.channel = ChannelModel {
            fading: crate::channel::Fading::Rayleigh,
            threshold: 3.5,
            max_neighbors: 4,
        };
        let result = run_kd_pdfl(clients, &cfg).unwrap();
        let solitary: Vec<&ExchangeEvent> = result
            .schedule_log
            .iter()
            .filter(|e| e.delivered.is_empty())
            .collect();
        assert!(
            !solitary.is_empty(),
            "expected at least one solitary round under a high threshold"
        );
        for e in solitary {
            assert_eq!(e.mix_self, 1.0);
            assert!(e.mix_peers.is_empty());
            assert!(e.distances.is_empty());
        }
    }

    #[test]
    fn fedavg_plus_switches_to_pure_local() {
        let (clients, _, mut cfg) = small_setup(4, 150);
        cfg.t_max = 30;
        let result =
            run_baseline(clients, &cfg, Baseline::FedAvgPlus { t_switch: 12 }).unwrap();
        // no exchange events and no messages after the switch
        assert!(result.schedule_log.iter().all(|e| e.t <= 12));
        assert!(result.messages.iter().all(|msg| msg.t <= 13));
        // t_switch >= t_max is rejected
        let (clients2, _, cfg2) = small_setup(4, 150);
        assert!(run_baseline(
            clients2,
            &cfg2,
            Baseline::FedAvgPlus { t_switch: cfg2.t_max }
        )
        .is_err());
    }

    #[test]
    fn config_validation_rejects_degenerate_schedules() {
        let (clients, _, mut cfg) = small_setup(4, 160);
        cfg.t_ex = 1;
        assert!(run_kd_pdfl(clients, &cfg).is_err());
    }

    #[test]
    fn chance_level_accuracy_for_untrained_uniform_model() {
        // a model with a zeroed output layer predicts uniformly; accuracy on
        // a balanced test set is near chance
        let synth = generate_synthetic::<f64>(9, 12, 3, 200, 33).unwrap();
        let arch = Architecture::new(12, vec![8], 9, false).unwrap();
        let mut model = nn::init_model::<f64>(&arch, 4).unwrap();
        let n = model.values().len();
        let mut values = model.values().to_vec();
        for v in &mut values[n - (8 * 9 + 9)..] {
            *v = 0.0;
        }
        model = ParamVector::from_parts(arch, values, None).unwrap();
        let (_, acc) = evaluate_on(&model, &synth.dataset).unwrap();
        // argmax ties resolve to class 0; on a balanced pool that is exactly 1/9
        assert!((acc - 1.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn accuracy_is_row_order_invariant_and_binary_on_singletons() {
        let synth = generate_synthetic::<f64>(4, 6, 2, 50, 44).unwrap();
        let arch = Architecture::new(6, vec![6], 4, true).unwrap();
        let model = nn::init_model::<f64>(&arch, 9).unwrap();
        let full = synth.dataset.clone();
        let (_, acc) = evaluate_on(&model, &full).unwrap();
        let perm: Vec<usize> = (0..full.len()).rev().collect();
        let reversed = full.subset(&perm);
        let (_, acc_rev) = evaluate_on(&model, &reversed).unwrap();
        assert_eq!(acc, acc_rev);

        let single = full.subset(&[0]);
        let (_, acc1) = evaluate_on(&model, &single).unwrap();
        assert!(acc1 == 0.0 || acc1 == 1.0);
    }
}
