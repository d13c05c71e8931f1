//! Experiment orchestration: configuration, deterministic RNG substreams,
//! parallel Monte-Carlo execution, metric aggregation, and CSV/JSON output.
//!
//! Determinism contract: a config fully determines the output bytes. Trials
//! draw from per-index ChaCha substreams and are reduced in index order, so
//! two runs with the same config — at any worker count — produce identical
//! CSV files.

pub mod config;
pub mod output;
pub mod rng;
pub mod run;
pub mod validate;

pub use config::{find_preset, Experiment, ExperimentConfig, ResolvedConfig, PRESETS};
pub use output::{render_csv, write_results};
pub use rng::rng_substream;
pub use run::{run_experiment, run_experiment_with_workers, ResultRow, ResultsTable, TrialResult};
