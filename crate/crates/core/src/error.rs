//! Error type shared by all simulator modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("non-finite value during {stage}")]
    NonFinite { stage: String },

    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("csv error at line {line}: {msg}")]
    Csv { line: u64, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("connectivity owner mismatch: vector owned by {vector_owner}, distances owned by {distance_owner}")]
    OwnerMismatch {
        vector_owner: usize,
        distance_owner: usize,
    },

    #[error("no mixing mass: empty footprint cache and zero confidence")]
    NoMixingMass,

    #[error("empty neighbor set")]
    EmptyNeighbors,

    #[error("peer {peer}: {source}")]
    Peer {
        peer: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("t={t} client={client} phase={phase}: {source}")]
    SimContext {
        t: u64,
        client: usize,
        phase: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Wraps an error with the peer id it occurred for.
    pub fn for_peer(self, peer: usize) -> Self {
        Error::Peer {
            peer,
            source: Box::new(self),
        }
    }

    /// Wraps an error with full simulation-loop context.
    pub fn in_sim(self, t: u64, client: usize, phase: &'static str) -> Self {
        Error::SimContext {
            t,
            client,
            phase,
            source: Box::new(self),
        }
    }
}
