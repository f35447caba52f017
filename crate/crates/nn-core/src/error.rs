use thiserror::Error;

/// Errors raised by the numeric core.
#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("parameter layout mismatch")]
    LayoutMismatch,
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
}

/// Failures while reading or writing the binary checkpoint format.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic: expected \"BPTW\"")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated: needed {needed} more bytes")]
    Truncated { needed: usize },
    #[error("crc mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("unparseable layout descriptor: {0}")]
    BadLayout(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
