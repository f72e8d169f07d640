//! Experiment orchestration for `heteroinf`: benchmark catalog, on-disk data
//! bundles, training and evaluation pipelines, studies and reports.

pub mod bundle;
pub mod catalog;
pub mod experiment;
pub mod study;

pub use bundle::{generate, Bundle, DataSpec};
pub use catalog::NetworkSource;
pub use experiment::{run_experiment, ExperimentConfig, RunRecord};
