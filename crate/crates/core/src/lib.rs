//! Compute-budget-aware data selection.
//!
//! The crate couples a small dense-math neural engine with budget-metered
//! training and probabilistic subset-selection policies. Training cost is
//! accounted in *sample usages* (one forward+backward on one example); every
//! training loop draws from an explicit [`budget::ComputeBudget`] and stops
//! exactly when the budget runs out. On top of that sit two selection
//! optimizers: a policy-gradient baseline that fully retrains a model per
//! sampled subset, and a penalty-relaxed single-level variant that replaces
//! the inner training with a fitted loss-versus-subset-size surrogate.

pub mod budget;
pub mod cads;
pub mod data;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod nn;
pub mod policy;
pub mod rng;
pub mod surrogate;
pub mod trainer;

pub use budget::{ChargeOutcome, ComputeBudget, Ledger};
pub use data::{LabeledDataset, Labels, SourcePartition, SpectralKind, SpectralSpec};
pub use error::{CoreError, Result};
pub use linalg::DenseMatrix;
pub use nn::{AdamState, LossKind, Metric, ModelParams};
pub use policy::{BernoulliPolicy, RatioVector, TruncGaussPolicy};
pub use surrogate::{LossProbe, SurrogateFit, SurrogateKind};
pub use trainer::{MaskedView, TrainConfig, TrainOutcome};
