//! Connectivity-vector maintenance and personalized model mixing.
//!
//! Each client privately owns one row of the collaboration graph. At every
//! exchange event the star node nudges its weights against the measured peer
//! distances plus a participation regularizer, clamps them at zero, and then
//! mixes the cached peer models with a confidence-derived self weight.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::distill::DistanceVector;
use crate::error::{Error, Result};
use crate::nn::{self, ParamVector};
use crate::scalar::Scalar;

/// One client's row of the collaboration graph. The self entry is kept at
/// zero; self-mixing is handled by the confidence term instead.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityVector<S> {
    pub owner: usize,
    pub weights: Vec<S>,
}

impl<S: Scalar> ConnectivityVector<S> {
    /// Uniform start: `1/M` toward every peer, zero toward self.
    pub fn uniform(owner: usize, m: usize) -> Self {
        let w = S::one() / S::from_f64_lossy(m as f64);
        let mut weights = vec![w; m];
        weights[owner] = S::zero();
        Self { owner, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Sum of all peer weights.
    pub fn off_diagonal_mass(&self) -> S {
        self.weights
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != self.owner)
            .map(|(_, &w)| w)
            .sum()
    }
}

/// A peer model copy plus the exchange iteration it arrived at.
#[derive(Debug, Clone)]
pub struct Footprint<S> {
    pub model: ParamVector<S>,
    pub received_at: u64,
}

/// Most recent model copies received from peers, at most one per peer.
#[derive(Debug, Clone)]
pub struct FootprintCache<S> {
    pub owner: usize,
    pub entries: BTreeMap<usize, Footprint<S>>,
}

impl<S: Scalar> FootprintCache<S> {
    pub fn new(owner: usize) -> Self {
        Self {
            owner,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, peer: usize, model: ParamVector<S>, received_at: u64) {
        self.entries.insert(peer, Footprint { model, received_at });
    }

    /// Drops entries older than `horizon` iterations before `now`.
    pub fn retain_fresh(&mut self, now: u64, horizon: Option<u64>) {
        if let Some(h) = horizon {
            self.entries
                .retain(|_, f| now.saturating_sub(f.received_at) <= h);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// How the connectivity step size is derived from the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// Per-coordinate `1/(|grad| + eps)`, which makes every step a unit-
    /// magnitude signed move. Faithful but aggressive: it clamps or
    /// overshoots weights initialized at `1/M`.
    LiteralElementwise,
    /// One scalar step `eta_w / (max |grad| + eps)` shared by all
    /// coordinates, preserving the relative ordering of the gradient.
    NormalizedScalar,
}

/// Hyperparameters of the connectivity update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerConfig<S> {
    /// Weight of the distance penalty.
    pub mu1: S,
    /// Weight of the participation regularizer.
    pub mu2: S,
    /// Guard added inside logs and divisions.
    pub epsilon: S,
    pub step_mode: StepMode,
    /// Scalar step size used by [`StepMode::NormalizedScalar`].
    pub eta_w: S,
}

impl<S: Scalar> Default for RegularizerConfig<S> {
    fn default() -> Self {
        Self {
            mu1: S::one(),
            mu2: S::from_f64_lossy(0.1),
            epsilon: S::from_f64_lossy(1e-8),
            step_mode: StepMode::NormalizedScalar,
            eta_w: S::from_f64_lossy(0.1),
        }
    }
}

/// Gradient of the participation regularizer
/// `g(w) = -log(sum_{j != i} w_ij + eps)`: every peer coordinate gets
/// `-1/(sum + eps)`, the self coordinate stays zero. The gradient diverges
/// as the total peer mass goes to zero, penalizing local-only behavior.
pub fn reg_grad<S: Scalar>(w: &ConnectivityVector<S>, epsilon: S) -> Vec<S> {
    let mass = w.off_diagonal_mass();
    let g = -(S::one() / (mass + epsilon));
    let mut out = vec![g; w.len()];
    out[w.owner] = S::zero();
    out
}

/// One connectivity update: for every probed peer `j`,
/// `w_ij <- max(0, w_ij - eta * (mu1 * d(i,j) + mu2 * reg_grad_j))`.
/// Coordinates of unprobed peers and of self are untouched.
pub fn conn_vector_update<S: Scalar>(
    w: &ConnectivityVector<S>,
    d: &DistanceVector<S>,
    cfg: &RegularizerConfig<S>,
) -> Result<ConnectivityVector<S>> {
    if d.owner != w.owner {
        return Err(Error::OwnerMismatch {
            vector_owner: w.owner,
            distance_owner: d.owner,
        });
    }
    for &j in d.entries.keys() {
        if j >= w.len() || j == w.owner {
            return Err(Error::InvalidInput(format!(
                "distance entry for invalid peer {}",
                j
            )));
        }
    }
    let rg = reg_grad(w, cfg.epsilon);
    let mut grads: BTreeMap<usize, S> = BTreeMap::new();
    for (&j, &dist) in &d.entries {
        grads.insert(j, cfg.mu1 * dist + cfg.mu2 * rg[j]);
    }

    let mut out = w.clone();
    match cfg.step_mode {
        StepMode::LiteralElementwise => {
            for (&j, &g) in &grads {
                let eta = S::one() / (g.abs() + cfg.epsilon);
                out.weights[j] = (out.weights[j] - eta * g).max(S::zero());
            }
        }
        StepMode::NormalizedScalar => {
            let gmax = grads.values().map(|g| g.abs()).fold(S::zero(), S::max);
            let eta = cfg.eta_w / (gmax + cfg.epsilon);
            for (&j, &g) in &grads {
                out.weights[j] = (out.weights[j] - eta * g).max(S::zero());
            }
        }
    }
    Ok(out)
}

/// Self-weight for mixing: `min(n_train / c_base, 1 / (n_neighbors + 1))`.
pub fn confidence<S: Scalar>(n_train: usize, n_neighbors: usize, c_base: S) -> S {
    debug_assert!(c_base > S::zero());
    let data_term = S::from_f64_lossy(n_train as f64) / c_base;
    let neighbor_term = S::one() / S::from_f64_lossy((n_neighbors + 1) as f64);
    data_term.min(neighbor_term)
}

/// The normalized mixing vector actually applied at an exchange event.
#[derive(Debug, Clone, PartialEq)]
pub struct MixWeights<S> {
    pub self_weight: S,
    /// `(peer, weight)` in ascending peer order.
    pub peers: Vec<(usize, S)>,
}

impl<S: Scalar> MixWeights<S> {
    pub fn total(&self) -> S {
        self.self_weight + self.peers.iter().map(|&(_, w)| w).sum::<S>()
    }
}

/// Normalizes `(confidence, cached peer weights)` to sum to one.
pub fn mixing_weights<S: Scalar>(
    conf: S,
    w: &ConnectivityVector<S>,
    cache: &FootprintCache<S>,
) -> Result<MixWeights<S>> {
    let raw: Vec<(usize, S)> = cache.entries.keys().map(|&j| (j, w.weights[j])).collect();
    let total = conf + raw.iter().map(|&(_, v)| v).sum::<S>();
    if !(total > S::zero()) {
        return Err(Error::NoMixingMass);
    }
    Ok(MixWeights {
        self_weight: conf / total,
        peers: raw.into_iter().map(|(j, v)| (j, v / total)).collect(),
    })
}

/// Personalized update: weighted sum of the own model and every cached
/// footprint, with the full weight vector normalized to sum to one.
///
/// An empty cache with positive confidence returns the own model unchanged.
pub fn mix_models<S: Scalar>(
    own: &ParamVector<S>,
    w: &ConnectivityVector<S>,
    cache: &FootprintCache<S>,
    conf: S,
) -> Result<(ParamVector<S>, MixWeights<S>)> {
    for (&peer, fp) in &cache.entries {
        if fp.model.arch() != own.arch() {
            return Err(Error::DimMismatch(format!(
                "footprint from peer {} has a different architecture",
                peer
            )));
        }
    }
    if cache.is_empty() {
        if conf > S::zero() {
            return Ok((
                own.clone(),
                MixWeights {
                    self_weight: S::one(),
                    peers: Vec::new(),
                },
            ));
        }
        return Err(Error::NoMixingMass);
    }
    let mix = mixing_weights(conf, w, cache)?;
    let mut terms: Vec<(S, &ParamVector<S>)> = Vec::with_capacity(mix.peers.len() + 1);
    terms.push((mix.self_weight, own));
    for &(j, wj) in &mix.peers {
        terms.push((wj, &cache.entries[&j].model));
    }
    let mixed = nn::combine(&terms)?;
    Ok((mixed, mix))
}

/// Renders collaboration rows as CSV: row i holds client i's weights with
/// the self column replaced by that client's confidence at snapshot time.
pub fn w_matrix_csv(rows: &[Vec<f64>], confidences: &[f64]) -> String {
    let m = rows.len();
    let mut out = String::new();
    out.push_str(
        "# collaboration matrix: row i = client i's peer weights; diagonal = confidence at snapshot time\n",
    );
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = (0..m)
            .map(|j| {
                if i == j {
                    format!("{}", confidences[i])
                } else {
                    format!("{}", row[j])
                }
            })
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}
