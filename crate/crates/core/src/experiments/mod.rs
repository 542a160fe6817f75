//! Presets, whole runs, curve export and run comparison.

pub mod compare;
pub mod config;
pub mod curves;
pub mod run;

pub use compare::{compare, Comparison, Leader, PolicySeries, PolicyVerdict};
pub use config::{DatasetKind, PolicySelection, Preset, RunConfig, DATA_DIR_ENV};
pub use curves::export_curves;
pub use run::{load_dataset, run, run_observed, verify_checkpoint, CyclesFile, RunSummary};
