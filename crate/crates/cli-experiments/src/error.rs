use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: bad image magic {got:#010x}, expected 0x00000803")]
    BadImageMagic { path: PathBuf, got: u32 },
    #[error("{path}: bad label magic {got:#010x}, expected 0x00000801")]
    BadLabelMagic { path: PathBuf, got: u32 },
    #[error("{path}: truncated, needed {needed} more bytes")]
    TruncatedFile { path: PathBuf, needed: usize },
    #[error("image file holds {images} items but label file holds {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("csv row {row} has {got} fields, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("csv row {row}, column {col}: non-numeric value {value:?}")]
    NonNumeric {
        row: usize,
        col: usize,
        value: String,
    },
    #[error("csv row {row}: label {value} is not a class index")]
    BadLabel { row: usize, value: f64 },
    #[error("csv rows have {got} feature columns but the declared shape needs {expected}")]
    BadFeatureCount { expected: usize, got: usize },
    #[error("config line {line}: expected key=value, got {text:?}")]
    BadConfigLine { line: usize, text: String },
    #[error("unknown configuration key {0:?}")]
    UnknownKey(String),
    #[error("key {key}: invalid value {value:?} ({reason})")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("{0}")]
    Validation(String),
    #[error("unknown network preset {0:?} (expected case1..case7)")]
    UnknownPreset(String),
    #[error("gradient check failed: max relative error {max:.3e} at parameter {at}")]
    GradCheckFailed { max: f64, at: usize },
    #[error("runtime: {0}")]
    Runtime(#[from] cluster_runtime::RuntimeError),
    #[error("numeric core: {0}")]
    Nn(#[from] nn_core::NnError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] nn_core::CheckpointError),
    #[error("parallel executor: {0}")]
    Parallel(#[from] inner_parallel::ParallelError),
    #[error("partitioning: {0}")]
    Partition(#[from] partitioning::PartitionError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit code: 1 validation, 2 runtime, 3 gradient check.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::GradCheckFailed { .. } => 3,
            CliError::Runtime(_) | CliError::Io(_) | CliError::Parallel(_) => 2,
            _ => 1,
        }
    }
}
