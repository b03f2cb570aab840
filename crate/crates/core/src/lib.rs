//! Deterministic discrete-time simulator of personalized, fully decentralized
//! federated learning with distillation-based peer similarity.
//!
//! Clients own private non-i.i.d. datasets and exchange nothing but model
//! parameters. A randomly activated star node compares peers' outputs on its
//! own data, updates a private connectivity vector, and mixes the received
//! models into a personalized update. Baselines (local-only, equal averaging,
//! averaging plus fine-tuning) run on the same engine for comparison.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the default `f64` instantiation used by the experiment tooling.

pub mod channel;
pub mod collab;
pub mod data;
pub mod distill;
pub mod error;
pub mod matrix;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default-precision aliases for the main entry types.
pub type Matrix64 = matrix::Matrix<f64>;
pub type ParamVector64 = nn::ParamVector<f64>;
pub type Batch64 = nn::Batch<f64>;
pub type ProbMatrix64 = nn::ProbMatrix<f64>;
pub type Dataset64 = data::Dataset<f64>;
pub type ClientData64 = data::ClientData<f64>;
pub type ConnectivityVector64 = collab::ConnectivityVector<f64>;
pub type FootprintCache64 = collab::FootprintCache<f64>;
pub type RegularizerConfig64 = collab::RegularizerConfig<f64>;
pub type DistanceVector64 = distill::DistanceVector<f64>;
pub type SimConfig64 = sim::SimConfig<f64>;
pub type SimResult64 = sim::SimResult<f64>;
pub type ClientRuntime64 = sim::ClientRuntime<f64>;

/// Single-precision aliases for the core math types.
pub type Matrix32 = matrix::Matrix<f32>;
pub type ParamVector32 = nn::ParamVector<f32>;
pub type Batch32 = nn::Batch<f32>;
pub type ProbMatrix32 = nn::ProbMatrix<f32>;
