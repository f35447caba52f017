use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParallelError {
    #[error("numeric core: {0}")]
    Nn(#[from] nn_core::NnError),
    #[error("output position ({i}, {j}) outside {h}x{w} map")]
    OutOfRange {
        i: usize,
        j: usize,
        h: usize,
        w: usize,
    },
    #[error("pool size must be >= 1")]
    EmptyPool,
    #[error("task graph contains a cycle involving task {0}")]
    Cycle(usize),
    #[error("task {task} depends on unknown task {dep}")]
    UnknownDependency { task: usize, dep: usize },
    #[error("executor pool failure: {0}")]
    ExecutorFailure(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
