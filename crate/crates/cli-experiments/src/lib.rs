//! Library surface of the experiment harness: dataset ingestion, network
//! presets, configuration, gradient checking, and the strategy matrix.

pub mod dataset;
pub mod error;
pub mod expconfig;
pub mod gradcheck;
pub mod matrix;
pub mod presets;

pub use dataset::{
    generate_synthetic_glyphs, load_csv_dataset, load_idx_dataset, save_csv_dataset,
    write_idx_dataset, DatasetHandle, Provenance,
};
pub use error::CliError;
pub use expconfig::{parse_config, split_flags, ExperimentConfig, TransportChoice};
pub use gradcheck::{gradient_check, GradCheckOutcome};
pub use matrix::{run_experiment_matrix, MatrixOutcome, SUMMARY_HEADER};
pub use presets::{build_network, preset, preset_names, PresetSpec};
