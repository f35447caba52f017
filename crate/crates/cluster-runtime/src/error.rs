use thiserror::Error;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("invalid cluster config: {0}")]
    BadConfig(String),
    #[error("dataset has {got} samples but the cluster needs at least {need}")]
    DatasetTooSmall { got: usize, need: usize },
    #[error("worker {worker} failed: {diagnostic}")]
    WorkerFailed { worker: usize, diagnostic: String },
    #[error("empty duration list")]
    EmptyDurations,
    #[error("nonpositive or non-finite duration for worker {0}")]
    BadDuration(usize),
    #[error("wire: {0}")]
    Wire(#[from] WireError),
    #[error("partitioning: {0}")]
    Partition(#[from] partitioning::PartitionError),
    #[error("weight sync: {0}")]
    Sync(#[from] weight_sync::SyncError),
    #[error("numeric core: {0}")]
    Nn(#[from] nn_core::NnError),
    #[error("parallel executor: {0}")]
    Parallel(#[from] inner_parallel::ParallelError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Decode failures name the exact check that failed.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("bad magic: expected \"BPTC\"")]
    BadMagic,
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("truncated frame: needed {needed} more bytes")]
    Truncated { needed: usize },
    #[error("payload length {len} exceeds the {max} byte limit")]
    LengthOverrun { len: u64, max: u64 },
    #[error("crc mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("payload of {got} bytes does not match {kind} expecting {expected}")]
    PayloadShape {
        kind: &'static str,
        expected: usize,
        got: usize,
    },
}
