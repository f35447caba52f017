use thiserror::Error;

#[derive(Debug, Error)]
pub enum SyncError {
    #[error("no local weight sets provided")]
    NoLocals,
    #[error("expected {expected} local weight sets, got {got}")]
    MissingWorkers { expected: usize, got: usize },
    #[error("local weight set {0} has mismatched layout")]
    LayoutMismatch(usize),
    #[error("duration matrix is ragged at row {0}")]
    RaggedMatrix(usize),
    #[error("negative or non-finite duration at row {row}, worker {worker}")]
    BadDuration { row: usize, worker: usize },
    #[error("base version {base} no longer in the version store (latest {latest})")]
    StaleBase { base: u64, latest: u64 },
    #[error("worker {0} is not registered")]
    UnknownWorker(usize),
    #[error("empty validation set")]
    EmptyValidation,
    #[error("numeric core: {0}")]
    Nn(#[from] nn_core::NnError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
