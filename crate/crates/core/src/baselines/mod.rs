//! Comparison attacks: random label flipping, a reference bilevel attack
//! driven by implicit gradients, and an exhaustive grid oracle for 2-D data.

mod bilevel;
mod grid;
mod label_flip;

pub use bilevel::{
    bilevel_attack_implicit, bilevel_poison_batch, implicit_gradient, BilevelConfig, BilevelTelemetry,
    OuterEval,
};
pub use grid::{bilevel_grid_oracle, GridOracleSpec, GridSurface};
pub use label_flip::label_flip_attack;
