//! Fading-channel neighbor sampling. Pairwise power gains are drawn i.i.d.
//! per exchange event; a peer is reachable when its gain clears the
//! threshold, and the reachable set is truncated to the strongest `K`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fading {
    Rayleigh,
}

/// Threshold-based reachability under Rayleigh fading. Power gains of a
/// Rayleigh amplitude are Exponential(1), so `P(gain >= tau) = exp(-tau)`
/// and `tau = ln((M-1)/target)` yields `target` reachable peers on average.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    pub fading: Fading,
    pub threshold: f64,
    pub max_neighbors: usize,
}

impl ChannelModel {
    /// Calibrates the threshold for a mean neighborhood size of
    /// `target_mean` among `m` clients. `cap` defaults to `m - 1`.
    pub fn rayleigh(m: usize, target_mean: f64, cap: Option<usize>) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidConfig("channel needs m >= 2".into()));
        }
        if !(target_mean > 0.0) || target_mean > (m - 1) as f64 {
            return Err(Error::InvalidConfig(format!(
                "target mean neighbors must be in (0, {}]",
                m - 1
            )));
        }
        let cap = cap.unwrap_or(m - 1);
        if cap < 1 {
            return Err(Error::InvalidConfig("neighbor cap must be >= 1".into()));
        }
        Ok(Self {
            fading: Fading::Rayleigh,
            threshold: ((m - 1) as f64 / target_mean).ln(),
            max_neighbors: cap,
        })
    }
}

/// Draws the star node's reachable peers for one exchange event.
///
/// Every peer's power gain is sampled fresh; peers at or above the threshold
/// are kept, strongest-first when the cap binds. May be empty, in which case
/// the star performs a solitary round.
pub fn sample_neighbors(
    channel: &ChannelModel,
    star: usize,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut reachable: Vec<(usize, f64)> = Vec::new();
    for j in 0..m {
        if j == star {
            continue;
        }
        let u: f64 = rng.gen();
        let gain = -(1.0 - u).ln();
        if gain >= channel.threshold {
            reachable.push((j, gain));
        }
    }
    if reachable.len() > channel.max_neighbors {
        reachable.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        reachable.truncate(channel.max_neighbors);
    }
    let mut out: Vec<usize> = reachable.into_iter().map(|(j, _)| j).collect();
    out.sort_unstable();
    out
}
