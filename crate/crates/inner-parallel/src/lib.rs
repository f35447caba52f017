//! Task-parallel execution inside one worker: convolutions tiled into
//! independent per-element subtasks, layer-level task DAGs with level
//! priorities, and min-workload scheduling onto a bounded executor pool.
//! Parallel results are bit-identical to the sequential nn-core path.

pub mod dag;
pub mod error;
pub mod executor;
pub mod schedule;
pub mod tiling;

pub use dag::{assign_priorities, build_task_dag, Phase, TaskDag, TaskKind, TaskNode};
pub use error::ParallelError;
pub use executor::{
    parallel_backward, parallel_conv_execute, parallel_conv_execute_costed, parallel_forward,
    parallel_forward_layer, sample_work_units, simulate_makespan, train_one_sample_parallel,
    ExecutedConv,
};
pub use schedule::{schedule_tasks, write_timeline_csv, ScheduledTask, TaskAssignment};
pub use tiling::{conv_area, count_conv_tasks, decompose_conv, ConvArea, ConvTask};
