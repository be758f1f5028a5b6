//! Few-shot malware triage.
//!
//! Binaries become entropy graphs ([`features`]), a compact convolutional
//! embedder is pretrained and meta-trained with task-memory prototypes
//! ([`model`], [`memory`]), and unseen samples are triaged into known classes
//! or a risk pool by rank-weighted nearest-neighbour voting ([`triage`]).
//! [`harness`] ties the pieces into datasets, episodes and pipelines.
//!
//! Numeric code is generic over [`Scalar`] (`f32`/`f64`); the aliases below
//! name the common instantiations.

pub mod error;
pub mod features;
pub mod harness;
pub mod memory;
pub mod model;
pub mod scalar;
pub mod triage;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Training-precision embedder parameters.
pub type Embedder64 = model::EmbedderParams<f64>;
/// Inference-precision embedder parameters.
pub type Embedder32 = model::EmbedderParams<f32>;
pub type TaskMemory64 = memory::TaskMemory<f64>;
pub type ReferenceIndex64 = triage::ReferenceIndex<f64>;
pub type ReferenceIndex32 = triage::ReferenceIndex<f32>;
