//! Cluster run configuration.

use serde::Serialize;

use crate::error::RuntimeError;
pub use weight_sync::Strategy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PartitionStrategy {
    Idpa,
    Udpa,
}

impl std::fmt::Display for PartitionStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PartitionStrategy::Idpa => "IDPA",
            PartitionStrategy::Udpa => "UDPA",
        })
    }
}

pub fn strategy_name(s: Strategy) -> &'static str {
    match s {
        Strategy::Sgwu => "SGWU",
        Strategy::Agwu => "AGWU",
    }
}

/// How logical messages move between roles in simulated-time runs:
/// passed as values, or encoded through the framed byte protocol and decoded
/// back (identical results, by construction and by test).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportMode {
    InProcess,
    Framed,
}

#[derive(Debug, Clone)]
pub struct ClusterConfig {
    pub workers: usize,
    pub strategy: Strategy,
    pub partition: PartitionStrategy,
    /// IDPA batch count A (ignored under UDPA).
    pub batches: u64,
    /// Nominal iteration count K; IDPA extends the run to A + dK.
    pub iterations: u64,
    /// Simulated per-worker time multipliers (1.0 = nominal speed).
    pub slowdown_factors: Vec<f64>,
    /// Executor pool per worker for the inner task parallelism.
    pub pool_size: usize,
    pub seed: u64,
    /// Unit communication cost c_w per weight-set transfer.
    pub unit_comm_cost: u64,
    /// Version-store capacity (default 4 per worker).
    pub store_capacity: Option<usize>,
    /// Validation slice cap (default 1000, or 10% of data if smaller).
    pub validation_limit: usize,
    pub transport: TransportMode,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            workers: 1,
            strategy: Strategy::Agwu,
            partition: PartitionStrategy::Udpa,
            batches: 4,
            iterations: 5,
            slowdown_factors: vec![1.0],
            pool_size: 1,
            seed: 42,
            unit_comm_cost: 1,
            store_capacity: None,
            validation_limit: 1000,
            transport: TransportMode::InProcess,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<(), RuntimeError> {
        if self.workers == 0 {
            return Err(RuntimeError::BadConfig("workers must be >= 1".into()));
        }
        if self.slowdown_factors.len() != self.workers {
            return Err(RuntimeError::BadConfig(format!(
                "{} slowdown factors for {} workers",
                self.slowdown_factors.len(),
                self.workers
            )));
        }
        if self
            .slowdown_factors
            .iter()
            .any(|f| !(f.is_finite() && *f > 0.0))
        {
            return Err(RuntimeError::BadConfig(
                "slowdown factors must be positive".into(),
            ));
        }
        if self.pool_size == 0 {
            return Err(RuntimeError::BadConfig("pool size must be >= 1".into()));
        }
        if self.iterations == 0 {
            return Err(RuntimeError::BadConfig("iterations must be >= 1".into()));
        }
        if self.partition == PartitionStrategy::Idpa && self.batches >= self.iterations {
            return Err(RuntimeError::BadConfig(format!(
                "incremental partitioning requires batches < iterations (A < K), got A={} K={}",
                self.batches, self.iterations
            )));
        }
        if self.partition == PartitionStrategy::Idpa && self.batches == 0 {
            return Err(RuntimeError::BadConfig("batches must be >= 1".into()));
        }
        Ok(())
    }

    /// Advertised worker frequency: the reciprocal of the slowdown factor.
    pub fn frequencies(&self) -> Vec<f64> {
        self.slowdown_factors.iter().map(|f| 1.0 / f).collect()
    }

    /// Iterations the run actually executes (A + dK under IDPA).
    pub fn total_iterations(&self) -> Result<u64, RuntimeError> {
        match self.partition {
            PartitionStrategy::Udpa => Ok(self.iterations),
            PartitionStrategy::Idpa => Ok(partitioning::remaining_iterations(
                self.iterations,
                self.batches,
                1,
            )?
            .total),
        }
    }
}
