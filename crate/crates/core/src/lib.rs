//! Availability poisoning of linear classifiers.
//!
//! The main attack crafts each poison point by gradient ascent on a kernel
//! density estimate of a target class, optimising only the coefficients of
//! a linear combination of `k` sampled prototypes, and injects it with a
//! different label. Label-flip and bilevel (implicit-gradient) attacks are
//! included for comparison, together with the linear SVM and logistic
//! regression trainers they target.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attack;
pub mod baselines;
pub mod batch;
pub mod data;
pub mod error;
pub mod kde;
pub mod linalg;
pub mod models;
pub mod rng;
pub mod scalar;

pub use attack::{
    beta_step, clip, combine, default_prototypes, generate_poison_batch, init_beta, psi, psi_normalized,
    run_beta_poisoning, run_with_estimate, sample_prototypes, AttackConfig, BetaStep, BetaTelemetry, BetaVector,
    Combination, LabelPolicy, PrototypeSet,
};
pub use baselines::{
    bilevel_attack_implicit, bilevel_grid_oracle, bilevel_poison_batch, implicit_gradient, label_flip_attack,
    BilevelConfig, BilevelTelemetry, GridOracleSpec, GridSurface,
};
pub use batch::{PoisonBatch, PointTelemetry};
pub use data::{filter_and_split, Dataset, Split, SplitSpec};
pub use error::{Error, Result};
pub use kde::{compute_bandwidth, Bandwidth, BandwidthRule, KdeEstimate};
pub use linalg::Matrix;
pub use models::{accuracy, predict, train, train_auto, train_multiclass_ovr, LinearModel, LossKind, TrainConfig};
pub use scalar::Scalar;

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type LinearModel64 = LinearModel<f64>;
pub type LinearModel32 = LinearModel<f32>;
pub type KdeEstimate64 = KdeEstimate<f64>;
pub type KdeEstimate32 = KdeEstimate<f32>;
pub type AttackConfig64 = AttackConfig<f64>;
pub type AttackConfig32 = AttackConfig<f32>;
pub type PoisonBatch64 = PoisonBatch<f64>;
pub type PoisonBatch32 = PoisonBatch<f32>;
