//! Derivation of independent, reproducible RNG streams from one master seed.
//!
//! Every source of randomness in a simulation run gets its own stream keyed
//! by `(master_seed, purpose, id)`. Streams never interleave, so a method
//! that skips one purpose (e.g. a baseline that never draws probe batches)
//! leaves every other stream bit-identical.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Role of a derived stream within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    /// Model weight initialization (id = client).
    Init,
    /// Local minibatch sampling (id = client).
    LocalBatches,
    /// Probe batch sampling at exchange events.
    Probe,
    /// Star node selection.
    Star,
    /// Channel gains and packet loss.
    Channel,
    /// Synthetic dataset generation.
    DatasetGen,
    /// Dirichlet partitioning.
    Partition,
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::Init => 1,
            StreamPurpose::LocalBatches => 2,
            StreamPurpose::Probe => 3,
            StreamPurpose::Star => 4,
            StreamPurpose::Channel => 5,
            StreamPurpose::DatasetGen => 6,
            StreamPurpose::Partition => 7,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a single sub-seed for `(master_seed, purpose, id)`.
pub fn derive_seed(master_seed: u64, purpose: StreamPurpose, id: u64) -> u64 {
    use rand_chacha::rand_core::RngCore;
    derive_stream(master_seed, purpose, id).next_u64()
}

/// Derives the stream for `(master_seed, purpose, id)`.
pub fn derive_stream(master_seed: u64, purpose: StreamPurpose, id: u64) -> ChaCha8Rng {
    let mut state = master_seed
        ^ purpose.tag().wrapping_mul(0xA076_1D64_78BD_642F)
        ^ id.wrapping_mul(0xE703_7ED1_A0B4_28DB);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
