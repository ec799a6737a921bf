//! Self-contained feed-forward estimators trained on the RU risk or on plain
//! empirical risk.
//!
//! Everything is explicit: forward passes cache pre-activations, backward
//! passes apply the chain rule through the RU loss subgradient, and Adam is
//! implemented directly. Training is single-threaded and deterministic given
//! the run seed; parallelism belongs one level up, across runs.

mod adam;
mod mlp;
mod train;

pub use adam::AdamState;
pub use mlp::{ForwardCache, Gradients, Mlp, NnError};
pub use train::{
    backward_erm, backward_ru, erm_risk, ru_risk, train, RuModel, TrainConfig, TrainMode,
    TrainOutcome, TrainedModel,
};
