//! Deterministic simulated-time execution of the full training pipeline:
//! seeded shuffle, partition plan, per-iteration local training, and
//! strategy-appropriate weight merging, with a work-unit clock scaled by
//! per-worker slowdown factors.

use nn_core::{NetworkF64, ParameterSetF64, Tensor3F64};
use partitioning::{udpa_plan, IdpaPlanner, PartitionPlan};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use weight_sync::{
    ParameterServer, ServerResponse, Strategy, UpdateMessage, UpdateRecord, VersionedWeights,
};

use crate::config::{ClusterConfig, PartitionStrategy, TransportMode};
use crate::error::RuntimeError;
use crate::wire::{decode_message, encode_message, WireMessage};

pub type Sample = (Tensor3F64, usize);

/// Per-epoch metrics row. Communication counters are cumulative.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MetricsRecord {
    pub epoch: u64,
    /// Cluster clock when the epoch's last merge completed.
    pub makespan: f64,
    /// Straggler wait accumulated in this epoch (zero under AGWU).
    pub sync_wait: f64,
    pub comm_units: u64,
    pub comm_bytes: u64,
    /// Mean/max of per-worker processing rates for the epoch, in (0, 1].
    pub balance: f64,
    pub accuracy: f64,
    pub auc: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub strategy: Strategy,
    pub partition: PartitionStrategy,
    pub epochs: Vec<MetricsRecord>,
    /// Dense K' x m matrix of per-iteration per-worker durations.
    pub iteration_times: Vec<Vec<f64>>,
    pub final_weights: VersionedWeights,
    /// Weight-set transfers over the whole run (uplinks + downlinks).
    pub transfers: u64,
    pub comm_bytes: u64,
    pub total_sync_wait: f64,
    pub makespan: f64,
    pub update_records: Vec<UpdateRecord>,
    pub partition_plan: PartitionPlan,
}

impl RunReport {
    /// The measured duration matrix t_j^(i) feeding wait and balance metrics.
    pub fn measured_iteration_times(&self) -> &[Vec<f64>] {
        &self.iteration_times
    }

    /// One JSON line per epoch record.
    pub fn write_metrics_jsonl<W: std::io::Write>(&self, mut out: W) -> Result<(), RuntimeError> {
        for record in &self.epochs {
            let line = serde_json::to_string(record).expect("record serializes");
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Mean-to-max ratio of a positive duration (or rate) list.
pub fn workload_balance(values: &[f64]) -> Result<f64, RuntimeError> {
    if values.is_empty() {
        return Err(RuntimeError::EmptyDurations);
    }
    let mut max = 0.0f64;
    let mut sum = 0.0f64;
    for (j, &v) in values.iter().enumerate() {
        if !(v.is_finite() && v > 0.0) {
            return Err(RuntimeError::BadDuration(j));
        }
        max = max.max(v);
        sum += v;
    }
    Ok(sum / values.len() as f64 / max)
}

/// Per-epoch balance: mean/max of worker processing rates (reciprocal
/// durations), over the workers that did any work.
fn epoch_balance(durations: &[f64]) -> f64 {
    let rates: Vec<f64> = durations
        .iter()
        .filter(|&&d| d > 0.0)
        .map(|&d| 1.0 / d)
        .collect();
    if rates.is_empty() {
        1.0
    } else {
        workload_balance(&rates).unwrap_or(1.0)
    }
}

/// One worker's epoch of local iteration training: sequential SGD over its
/// samples starting from the fetched global set. Returns the local set,
/// its validation accuracy, and the simulated duration.
#[allow(clippy::too_many_arguments)]
pub fn worker_epoch(
    network: &NetworkF64,
    global: &ParameterSetF64,
    sample_ids: &[usize],
    dataset: &[Sample],
    validation: &[Sample],
    classes: usize,
    pool_size: usize,
    work_per_sample: f64,
    slowdown: f64,
    worker: usize,
) -> Result<(ParameterSetF64, f64, f64), RuntimeError> {
    let mut net = network.clone();
    nn_core::apply(global, &mut net)?;
    for &idx in sample_ids {
        let (x, label) = &dataset[idx];
        let target = nn_core::one_hot::<f64>(*label, classes);
        let loss = inner_parallel::train_one_sample_parallel(&mut net, x, &target, pool_size)
            .map_err(|e| RuntimeError::WorkerFailed {
                worker,
                diagnostic: e.to_string(),
            })?;
        if !loss.is_finite() {
            return Err(RuntimeError::WorkerFailed {
                worker,
                diagnostic: format!("non-finite loss on sample {idx}"),
            });
        }
    }
    let local = nn_core::flatten(&net);
    let q = if validation.is_empty() {
        0.0
    } else {
        weight_sync::evaluate_local_accuracy(network, &local, validation)?
    };
    let duration = sample_ids.len() as f64 * work_per_sample * slowdown;
    Ok((local, q, duration))
}

struct WorkerState {
    samples: Vec<usize>,
    /// Global set the worker trains from in its current iteration.
    base: VersionedWeights,
    /// Simulated clock: when the worker finished its last iteration.
    clock: f64,
    iteration: u64,
}

struct SimCluster<'a> {
    config: &'a ClusterConfig,
    network: &'a NetworkF64,
    dataset: &'a [Sample],
    validation: Vec<Sample>,
    eval_set: Vec<Sample>,
    classes: usize,
    work_per_sample: f64,
    pool_order: Vec<usize>,
    server: ParameterServer,
    workers: Vec<WorkerState>,
    planner: Option<IdpaPlanner>,
    iteration_times: Vec<Vec<f64>>,
    epochs: Vec<MetricsRecord>,
    comm_bytes: u64,
    total_sync_wait: f64,
}

impl<'a> SimCluster<'a> {
    /// Ships a logical message through the configured transport, returning
    /// the (possibly decode-round-tripped) message and its wire size.
    fn transport(&mut self, msg: WireMessage) -> Result<WireMessage, RuntimeError> {
        self.comm_bytes += msg.encoded_len() as u64;
        match self.config.transport {
            TransportMode::InProcess => Ok(msg),
            TransportMode::Framed => {
                let bytes = encode_message(&msg);
                let (decoded, used) = decode_message(&bytes)?;
                debug_assert_eq!(used, bytes.len());
                Ok(decoded)
            }
        }
    }

    /// Sends one worker's local set to the parameter server through the
    /// transport and returns the server's decision.
    fn submit(
        &mut self,
        worker: usize,
        local: ParameterSetF64,
        accuracy: f64,
        duration: f64,
        iteration: u64,
        wall_time: f64,
    ) -> Result<ServerResponse, RuntimeError> {
        let base_version = self.workers[worker].base.version;
        let msg = self.transport(WireMessage::LocalSubmit {
            worker: worker as u32,
            base_version: base_version as u32,
            values: local.values().to_vec(),
            accuracy,
            duration,
        })?;
        let WireMessage::LocalSubmit {
            worker: w,
            base_version: base,
            values,
            accuracy: q,
            duration: _,
        } = msg
        else {
            unreachable!("submit frames decode to LocalSubmit")
        };
        let params = ParameterSetF64::new(values, local.layout().to_vec())?;
        let update = UpdateMessage {
            worker: w as usize,
            base_version: base as u64,
            params,
            accuracy: q,
            local_iteration: iteration,
        };
        Ok(self.server.handle_submission(update, wall_time)?)
    }

    /// Delivers a global version to a worker through the transport.
    fn share_global(&mut self, worker: usize, version: &VersionedWeights) -> Result<(), RuntimeError> {
        let msg = self.transport(WireMessage::GlobalWeights {
            version: version.version as u32,
            values: version.params.values().to_vec(),
        })?;
        let WireMessage::GlobalWeights { version: v, values } = msg else {
            unreachable!("share frames decode to GlobalWeights")
        };
        self.server.count_share(1);
        self.workers[worker].base = VersionedWeights {
            version: v as u64,
            params: ParameterSetF64::new(values, version.params.layout().to_vec())?,
        };
        Ok(())
    }

    /// Extends worker sample sets with the next incremental batch.
    fn allocate_batch(&mut self, measured: Option<&[f64]>) -> Result<(), RuntimeError> {
        let Some(planner) = self.planner.as_mut() else {
            return Ok(());
        };
        if planner.is_complete() {
            return Ok(());
        }
        if let Some(durations) = measured {
            planner.record_measurements(durations)?;
        }
        planner.plan_step()?;
        let plan = planner.plan();
        let batch_ranges = plan.ranges.last().expect("plan_step appended a batch");
        for (j, &(start, end)) in batch_ranges.iter().enumerate() {
            let ids: Vec<usize> = (start..end)
                .map(|i| self.pool_order[i as usize])
                .collect();
            self.workers[j].samples.extend_from_slice(&ids);
        }
        Ok(())
    }

    fn run_epoch_for(
        &mut self,
        worker: usize,
    ) -> Result<(ParameterSetF64, f64, f64), RuntimeError> {
        let state = &self.workers[worker];
        worker_epoch(
            self.network,
            &state.base.params,
            &state.samples.clone(),
            self.dataset,
            &self.validation,
            self.classes,
            self.config.pool_size,
            self.work_per_sample,
            self.config.slowdown_factors[worker],
            worker,
        )
    }

    fn emit_epoch(
        &mut self,
        epoch: u64,
        makespan: f64,
        sync_wait: f64,
        durations: &[f64],
    ) -> Result<(), RuntimeError> {
        let eval = nn_core::evaluate_with_params(
            self.network,
            &self.server.latest().params,
            &self.eval_set,
        )?;
        self.total_sync_wait += sync_wait;
        self.epochs.push(MetricsRecord {
            epoch,
            makespan,
            sync_wait,
            comm_units: self.server.transfers() * self.config.unit_comm_cost,
            comm_bytes: self.comm_bytes,
            balance: epoch_balance(durations),
            accuracy: eval.accuracy,
            auc: eval.auc,
        });
        Ok(())
    }
}

/// Seeded shuffle of `n` sample indices split into (validation slice,
/// training pool). The validation slice is capped at `validation_limit` or
/// 10% of the data, whichever is smaller, and never starves the pool below
/// one sample per worker.
pub fn seeded_split(
    seed: u64,
    n: usize,
    validation_limit: usize,
    workers: usize,
) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let validation_len = validation_limit
        .min(n / 10)
        .min(n.saturating_sub(workers))
        .max(usize::from(n > workers));
    let validation = order[..validation_len].to_vec();
    let pool = order[validation_len..].to_vec();
    (validation, pool)
}

/// Executes the full pipeline and returns the complete report.
/// `eval_set`, when provided, is the held-out set scored once per epoch;
/// otherwise the shared validation slice is scored.
pub fn run_training(
    config: &ClusterConfig,
    samples: &[Sample],
    network: &NetworkF64,
    eval_set: Option<&[Sample]>,
) -> Result<RunReport, RuntimeError> {
    config.validate()?;
    let m = config.workers;
    if samples.len() < m {
        return Err(RuntimeError::DatasetTooSmall {
            got: samples.len(),
            need: m,
        });
    }
    let input_shape = samples[0].0.shape();
    let classes = network.output_len(input_shape)?;
    let work_per_sample = inner_parallel::sample_work_units(network, input_shape)?;

    let (validation_idx, pool_order) =
        seeded_split(config.seed, samples.len(), config.validation_limit, m);
    let validation: Vec<Sample> = validation_idx.iter().map(|&i| samples[i].clone()).collect();
    let n_train = pool_order.len() as u64;
    let eval_owned: Vec<Sample> = match eval_set {
        Some(set) => set.to_vec(),
        None => validation.clone(),
    };

    let k_total = config.total_iterations()?;
    let initial = nn_core::flatten(network);
    let server = ParameterServer::new(
        config.strategy,
        m,
        initial.clone(),
        config.store_capacity,
    );

    let (planner, plan) = match config.partition {
        PartitionStrategy::Idpa => (
            Some(IdpaPlanner::new(
                n_train,
                config.batches as usize,
                &config.frequencies(),
            )?),
            None,
        ),
        PartitionStrategy::Udpa => (None, Some(udpa_plan(n_train, m)?)),
    };

    let mut cluster = SimCluster {
        config,
        network,
        dataset: samples,
        validation,
        eval_set: eval_owned,
        classes,
        work_per_sample,
        pool_order,
        server,
        workers: (0..m)
            .map(|_| WorkerState {
                samples: Vec::new(),
                base: VersionedWeights {
                    version: 0,
                    params: initial.clone(),
                },
                clock: 0.0,
                iteration: 0,
            })
            .collect(),
        planner,
        iteration_times: Vec::new(),
        epochs: Vec::new(),
        comm_bytes: 0,
        total_sync_wait: 0.0,
    };

    // UDPA hands everything out up front.
    if let Some(p) = &plan {
        for j in 0..m {
            for &(start, end) in &p.worker_ranges(j) {
                let ids: Vec<usize> = (start..end)
                    .map(|i| cluster.pool_order[i as usize])
                    .collect();
                cluster.workers[j].samples.extend_from_slice(&ids);
            }
        }
    }

    match config.strategy {
        Strategy::Sgwu => run_sgwu(&mut cluster, k_total)?,
        Strategy::Agwu => run_agwu(&mut cluster, k_total)?,
    }

    let partition_plan = match (&cluster.planner, plan) {
        (Some(p), _) => p.plan().clone(),
        (None, Some(p)) => p,
        (None, None) => unreachable!(),
    };
    let makespan = cluster
        .epochs
        .last()
        .map(|e| e.makespan)
        .unwrap_or_default();
    Ok(RunReport {
        strategy: config.strategy,
        partition: config.partition,
        epochs: cluster.epochs,
        iteration_times: cluster.iteration_times,
        final_weights: cluster.server.latest().clone(),
        transfers: cluster.server.transfers(),
        comm_bytes: cluster.comm_bytes,
        total_sync_wait: cluster.total_sync_wait,
        makespan,
        update_records: cluster.server.records().to_vec(),
        partition_plan,
    })
}

/// Lockstep iterations with a barrier merge at each epoch.
fn run_sgwu(cluster: &mut SimCluster, k_total: u64) -> Result<(), RuntimeError> {
    let m = cluster.config.workers;
    let batches = match cluster.config.partition {
        PartitionStrategy::Idpa => cluster.config.batches,
        PartitionStrategy::Udpa => 0,
    };
    let mut clock = 0.0f64;
    let mut last_durations: Option<Vec<f64>> = None;
    for epoch in 1..=k_total {
        if epoch <= batches {
            cluster.allocate_batch(last_durations.as_deref())?;
        }
        let mut durations = Vec::with_capacity(m);
        let mut locals = Vec::with_capacity(m);
        for j in 0..m {
            let (local, q, d) = cluster.run_epoch_for(j)?;
            durations.push(d);
            locals.push((local, q));
        }
        let max_d = durations.iter().cloned().fold(0.0, f64::max);
        let wait: f64 = durations.iter().map(|d| max_d - d).sum();
        clock += max_d;
        // all locals reach the server; the last one releases the barrier
        let mut merged = None;
        for (j, (local, q)) in locals.into_iter().enumerate() {
            match cluster.submit(j, local, q, durations[j], epoch, clock)? {
                ServerResponse::Buffered => {}
                ServerResponse::Merged(v) => merged = Some(v),
                ServerResponse::Resync(_) => unreachable!("synchronous merges cannot go stale"),
            }
        }
        let merged = merged.expect("all workers submitted");
        for j in 0..m {
            cluster.share_global(j, &merged)?;
            cluster.workers[j].clock = clock;
            cluster.workers[j].iteration = epoch;
        }
        cluster.iteration_times.push(durations.clone());
        cluster.emit_epoch(epoch, clock, wait, &durations)?;
        last_durations = Some(durations);
    }
    Ok(())
}

/// Event-driven asynchronous updates: during the incremental batch phase
/// workers re-align at each allocation boundary; afterwards they free-run,
/// submitting whenever they finish and never waiting for anyone.
fn run_agwu(cluster: &mut SimCluster, k_total: u64) -> Result<(), RuntimeError> {
    let m = cluster.config.workers;
    let batches = match cluster.config.partition {
        PartitionStrategy::Idpa => cluster.config.batches,
        PartitionStrategy::Udpa => 0,
    };
    let mut last_durations: Option<Vec<f64>> = None;

    // Batch phase: every worker runs iteration `epoch`, submissions are
    // processed in completion order, and the allocation boundary re-aligns
    // the clocks.
    let mut clock = 0.0f64;
    for epoch in 1..=batches.min(k_total) {
        cluster.allocate_batch(last_durations.as_deref())?;
        let mut durations = Vec::with_capacity(m);
        let mut finished: Vec<(f64, usize, ParameterSetF64, f64)> = Vec::with_capacity(m);
        for j in 0..m {
            let (local, q, d) = cluster.run_epoch_for(j)?;
            durations.push(d);
            finished.push((clock + d, j, local, q));
        }
        finished.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        for (t, j, local, q) in finished {
            let response = cluster.submit(j, local, q, durations[j], epoch, t)?;
            let latest = match response {
                ServerResponse::Merged(v) => v,
                ServerResponse::Resync(v) => v,
                ServerResponse::Buffered => unreachable!("asynchronous path never buffers"),
            };
            cluster.share_global(j, &latest)?;
        }
        clock += durations.iter().cloned().fold(0.0, f64::max);
        for j in 0..m {
            cluster.workers[j].clock = clock;
            cluster.workers[j].iteration = epoch;
        }
        cluster.iteration_times.push(durations.clone());
        cluster.emit_epoch(epoch, clock, 0.0, &durations)?;
        last_durations = Some(durations);
    }

    // Free-run phase: a simple event loop over (finish time, worker).
    let first_free = batches.min(k_total) + 1;
    if first_free > k_total {
        return Ok(());
    }
    let epochs_left = (k_total - first_free + 1) as usize;
    let mut rows: Vec<Vec<f64>> = vec![vec![0.0; m]; epochs_left];
    let mut per_epoch_done: Vec<usize> = vec![0; epochs_left];
    let mut next_emit = 0usize;
    let mut pending: Vec<(f64, usize)> = Vec::new();
    let mut prepared: Vec<Option<(ParameterSetF64, f64, f64)>> = vec![None; m];
    for j in 0..m {
        let (local, q, d) = cluster.run_epoch_for(j)?;
        pending.push((cluster.workers[j].clock + d, j));
        prepared[j] = Some((local, q, d));
    }
    while let Some(pos) = pending
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)))
        .map(|(pos, _)| pos)
    {
        let (t, j) = pending.swap_remove(pos);
        let (local, q, d) = prepared[j].take().expect("worker has a prepared epoch");
        let epoch_idx = cluster.workers[j].iteration + 1 - first_free;
        let row = epoch_idx as usize;
        rows[row][j] = d;
        per_epoch_done[row] += 1;
        let response = cluster.submit(j, local, q, d, cluster.workers[j].iteration + 1, t)?;
        let latest = match response {
            ServerResponse::Merged(v) => v,
            ServerResponse::Resync(v) => v,
            ServerResponse::Buffered => unreachable!("asynchronous path never buffers"),
        };
        cluster.share_global(j, &latest)?;
        cluster.workers[j].clock = t;
        cluster.workers[j].iteration += 1;

        // emit epochs whose last worker just finished, in order
        while next_emit < epochs_left && per_epoch_done[next_emit] == m {
            let durations = rows[next_emit].clone();
            cluster.iteration_times.push(durations.clone());
            cluster.emit_epoch(first_free + next_emit as u64, t, 0.0, &durations)?;
            next_emit += 1;
        }

        if cluster.workers[j].iteration < k_total {
            let (local, q, d) = cluster.run_epoch_for(j)?;
            pending.push((cluster.workers[j].clock + d, j));
            prepared[j] = Some((local, q, d));
        }
    }
    Ok(())
}
