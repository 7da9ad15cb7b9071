//! Experiment runner for the poisoning library: accuracy-under-poisoning
//! curves, timing comparisons, prototype-count sweeps and 2-D objective
//! landscapes, with CSV, JSON and gnuplot output.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datasets;
pub mod error;
pub mod landscape;
pub mod output;
pub mod presets;
pub mod runner;
pub mod spec;

pub use error::{HarnessError, Result};
pub use landscape::{run_landscape, Landscape, LandscapeConfig};
pub use presets::{DataContext, Preset};
pub use runner::{
    run_ablation_prototypes, run_poisoning_curve, run_timing_comparison, summarize, RunRecord, RunRow, Summary,
    TimingTable, ABLATION_FRACTION,
};
pub use spec::{AttackKind, AttackSettings, ExperimentSpec, ModelKind, TimingMode};
