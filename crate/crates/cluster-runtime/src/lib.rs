//! Outer-layer cluster orchestration: a main server (partitioning and task
//! management), m workers with simulated heterogeneity, and the parameter
//! server, connected either in-process or through the framed byte protocol.

pub mod config;
pub mod error;
pub mod runtime;
pub mod tcp;
pub mod wire;

pub use config::{strategy_name, ClusterConfig, PartitionStrategy, Strategy, TransportMode};
pub use tcp::run_training_tcp;
pub use error::{RuntimeError, WireError};
pub use runtime::{
    run_training, seeded_split, worker_epoch, workload_balance, MetricsRecord, RunReport, Sample,
};
pub use wire::{decode_message, encode_message, read_frame, write_frame, WireMessage};
