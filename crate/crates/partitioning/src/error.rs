use thiserror::Error;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("worker {0} has nonpositive or non-finite frequency")]
    BadFrequency(usize),
    #[error("worker {0} has no usable time measurement")]
    UnmeasuredWorker(usize),
    #[error("batch count {batches} exceeds sample count {samples}")]
    TooManyBatches { batches: u64, samples: u64 },
    #[error("need at least one {0}")]
    Empty(&'static str),
    #[error("expected {expected} per-worker values, got {got}")]
    WrongWorkerCount { expected: usize, got: usize },
    #[error("batch index {0} out of order or out of range")]
    BadBatchIndex(usize),
    #[error("iteration budget requires 1 <= A < K, got A={batches}, K={iterations}")]
    BadIterationSplit { batches: u64, iterations: u64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
