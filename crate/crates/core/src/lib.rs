//! Federated-learning protocol simulator and corruption-robustness harness.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: a small feed-forward classifier with analytic gradients,
//!   cross-entropy loss, Adam, and the binary checkpoint format.
//! - [`datagen`]: deterministic synthetic 6-class patch datasets for two
//!   "hospital" sources, stratified splitting and the train/eval transforms.
//! - [`corruption`]: eight image corruptions at five severity levels plus the
//!   uniform kind/severity sampler.
//! - [`federation`]: FedAvg, client local training and the round state
//!   machine over an in-process transport.
//! - [`orchestrator`]: the two-stage protocol, a grid search over local
//!   epochs and rounds followed by a good/corrupted four-client validation run.
//! - [`config`] and [`manifest`]: run configuration and the auditable text
//!   artifacts every stage writes.

pub mod config;
pub mod corruption;
pub mod datagen;
pub mod error;
pub mod federation;
pub mod manifest;
pub mod orchestrator;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
