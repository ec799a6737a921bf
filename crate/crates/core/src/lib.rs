//! Robust regression under bounded conditional distribution shift.
//!
//! The training distribution `P` and the (unknown) deployment distribution `Q`
//! are assumed to share a covariate marginal while the conditional outcome law
//! may be reweighted by a likelihood ratio bounded in `[Γ⁻¹, Γ]`. Minimizing
//! the Rockafellar-Uryasev (RU) loss
//!
//! ```text
//! L_RU(z, a, y) = Γ⁻¹·L(z, y) + (1 − Γ⁻¹)·a + (Γ − Γ⁻¹)·(L(z, y) − a)₊
//! ```
//!
//! over a decision rule `h` and an auxiliary function `α` yields the decision
//! rule with the best worst-case risk over that band, and at the optimum
//! `α(x)` equals the conditional `η(Γ)`-quantile of the loss.
//!
//! The crate provides:
//!
//! - [`loss`] — base losses, the `Γ` band, and the RU loss with exact
//!   subgradients;
//! - [`oracle`] — ground-truth worst-case risk, CVaR, conditional loss
//!   quantiles, and per-covariate RU minimizers for validating estimators;
//! - [`data`] — synthetic data generators with exposed conditional laws;
//! - [`nn`] — self-contained feed-forward networks, backprop through the RU
//!   loss, and Adam training with validation-based model selection;
//! - [`sieve`] — truncated polynomial/spline sieve estimators;
//! - [`eval`] — risk metrics, distribution-shift sweeps, and report tables.

pub mod data;
pub mod eval;
pub mod loss;
pub mod nn;
pub mod oracle;
pub mod sieve;

pub use data::{RegressionDataset, Split, SyntheticModel};
pub use eval::{EvalReport, MethodSpec};
pub use loss::{BaseLoss, GammaBand};
pub use nn::{Mlp, RuModel, TrainConfig};
pub use oracle::{DiscreteLossDistribution, GaussianMixture1D};
pub use sieve::{SieveBasis, SieveModel};
