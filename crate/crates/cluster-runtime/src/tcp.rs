//! Wall-clock cluster execution over loopback sockets.
//!
//! Worker actors connect to a cluster server (main-server and
//! parameter-server roles co-located, which the architecture allows) and
//! exchange framed messages: Register once, then per iteration IterTime and
//! LocalSubmit up, AllocBatch and GlobalWeights down. Durations are measured
//! wall-clock, so AGWU runs are not bit-reproducible across executions; the
//! simulated-time runtime is the reproducible path.

use std::collections::BTreeMap;
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Instant;

use nn_core::{LayerLayout, NetworkF64, ParameterSetF64};
use partitioning::{udpa_plan, IdpaPlanner, PartitionPlan};
use weight_sync::{ParameterServer, ServerResponse, Strategy, UpdateMessage};

use crate::config::{ClusterConfig, PartitionStrategy};
use crate::error::RuntimeError;
use crate::runtime::{seeded_split, worker_epoch, MetricsRecord, RunReport, Sample};
use crate::wire::{read_frame, write_frame, WireMessage};

struct ServerInner {
    pserver: ParameterServer,
    planner: Option<IdpaPlanner>,
    /// Batch ranges planned so far, indexed by batch number - 1.
    batches: Vec<Vec<(u64, u64)>>,
    /// Reported durations per iteration per worker.
    durations: BTreeMap<u64, BTreeMap<usize, f64>>,
    /// Last iteration each worker reported.
    last_iter: BTreeMap<usize, u64>,
    /// Completed submissions per iteration bucket.
    epoch_done: BTreeMap<u64, usize>,
    /// Global snapshot and wall time when an epoch bucket completed.
    epoch_snapshots: BTreeMap<u64, (ParameterSetF64, f64)>,
    sgwu_generation: u64,
    started_at: Instant,
    failure: Option<String>,
}

struct Shared {
    inner: Mutex<ServerInner>,
    cv: Condvar,
    workers: usize,
    total_batches: u64,
}

fn plan_ready_batches(shared: &Shared, inner: &mut ServerInner) -> Result<(), RuntimeError> {
    loop {
        let Some(planner) = inner.planner.as_mut() else {
            return Ok(());
        };
        if planner.is_complete() {
            return Ok(());
        }
        let next = planner.next_batch() as u64;
        if next > 1 {
            let have = inner.durations.get(&(next - 1)).map_or(0, BTreeMap::len);
            if have < shared.workers {
                return Ok(());
            }
            let row: Vec<f64> = inner.durations[&(next - 1)].values().copied().collect();
            planner.record_measurements(&row)?;
        }
        planner.plan_step()?;
        let ranges = planner.plan().ranges.last().unwrap().clone();
        inner.batches.push(ranges);
        shared.cv.notify_all();
    }
}

fn handle_connection(
    shared: Arc<Shared>,
    stream: TcpStream,
    layout: Vec<LayerLayout>,
) -> Result<(), RuntimeError> {
    let mut reader = stream.try_clone()?;
    let mut writer = stream;
    let first = read_frame(&mut reader)?;
    let WireMessage::Register { worker, .. } = first else {
        return Err(RuntimeError::BadConfig(format!(
            "expected Register, got type {}",
            first.type_byte()
        )));
    };
    let worker = worker as usize;

    // initial allocation and W^(0): setup distribution, not counted as a
    // weight-update transfer
    {
        let mut inner = shared.inner.lock().unwrap();
        plan_ready_batches(&shared, &mut inner)?;
        while inner.batches.is_empty() && inner.failure.is_none() {
            inner = shared.cv.wait(inner).unwrap();
        }
        if let Some(f) = &inner.failure {
            return Err(RuntimeError::BadConfig(f.clone()));
        }
        let ranges = vec![inner.batches[0][worker]];
        let latest = inner.pserver.latest().clone();
        drop(inner);
        write_frame(&mut writer, &WireMessage::AllocBatch { batch: 1, ranges })?;
        write_frame(
            &mut writer,
            &WireMessage::GlobalWeights {
                version: latest.version as u32,
                values: latest.params.values().to_vec(),
            },
        )?;
    }

    loop {
        match read_frame(&mut reader)? {
            WireMessage::Shutdown => return Ok(()),
            WireMessage::IterTime {
                worker: w,
                iter,
                duration,
            } => {
                let mut inner = shared.inner.lock().unwrap();
                inner
                    .durations
                    .entry(iter as u64)
                    .or_default()
                    .insert(w as usize, duration);
                inner.last_iter.insert(w as usize, iter as u64);
                plan_ready_batches(&shared, &mut inner)?;
                shared.cv.notify_all();
            }
            WireMessage::LocalSubmit {
                worker: w,
                base_version,
                values,
                accuracy,
                duration: _,
            } => {
                let params = ParameterSetF64::new(values, layout.clone())?;
                let mut inner = shared.inner.lock().unwrap();
                let iteration = inner.last_iter.get(&(w as usize)).copied().unwrap_or(1);
                let wall = inner.started_at.elapsed().as_secs_f64();
                let response = inner.pserver.handle_submission(
                    UpdateMessage {
                        worker: w as usize,
                        base_version: base_version as u64,
                        params,
                        accuracy,
                        local_iteration: iteration,
                    },
                    wall,
                )?;
                let latest = match response {
                    ServerResponse::Merged(v) => v,
                    ServerResponse::Resync(v) => v,
                    ServerResponse::Buffered => {
                        let generation = inner.sgwu_generation;
                        while inner.sgwu_generation == generation && inner.failure.is_none() {
                            inner = shared.cv.wait(inner).unwrap();
                        }
                        if let Some(f) = &inner.failure {
                            return Err(RuntimeError::BadConfig(f.clone()));
                        }
                        inner.pserver.latest().clone()
                    }
                };
                if inner.pserver.strategy() == Strategy::Sgwu
                    && latest.version > inner.sgwu_generation
                {
                    inner.sgwu_generation = latest.version;
                    shared.cv.notify_all();
                }

                // bucket the completion by the worker's own iteration index
                let done = inner.epoch_done.entry(iteration).or_insert(0);
                *done += 1;
                if *done == shared.workers {
                    let wall_now = inner.started_at.elapsed().as_secs_f64();
                    let snapshot = inner.pserver.latest().params.clone();
                    inner.epoch_snapshots.insert(iteration, (snapshot, wall_now));
                }

                // during the incremental phase, hold the reply until the
                // allocation this worker needs next is planned
                if inner.planner.is_some() && iteration + 1 <= shared.total_batches {
                    while (inner.batches.len() as u64) < iteration + 1 && inner.failure.is_none() {
                        inner = shared.cv.wait(inner).unwrap();
                    }
                    if let Some(f) = &inner.failure {
                        return Err(RuntimeError::BadConfig(f.clone()));
                    }
                }
                let pending: Vec<(u16, (u64, u64))> = inner
                    .batches
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(i, b)| ((i + 1) as u16, b[worker]))
                    .collect();
                let reply = inner.pserver.latest().clone();
                inner.pserver.count_share(1);
                drop(inner);

                // batch ids make re-sent allocations idempotent worker-side
                for (batch, range) in pending {
                    write_frame(
                        &mut writer,
                        &WireMessage::AllocBatch {
                            batch,
                            ranges: vec![range],
                        },
                    )?;
                }
                write_frame(
                    &mut writer,
                    &WireMessage::GlobalWeights {
                        version: reply.version as u32,
                        values: reply.params.values().to_vec(),
                    },
                )?;
            }
            other => {
                return Err(RuntimeError::BadConfig(format!(
                    "unexpected message type {}",
                    other.type_byte()
                )))
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_worker(
    addr: std::net::SocketAddr,
    worker: usize,
    config: &ClusterConfig,
    dataset: &[Sample],
    pool_order: &[usize],
    validation: &[Sample],
    network: &NetworkF64,
    classes: usize,
    k_total: u64,
) -> Result<(), RuntimeError> {
    let stream = TcpStream::connect(addr)?;
    let mut reader = stream.try_clone()?;
    let mut writer = stream;
    write_frame(
        &mut writer,
        &WireMessage::Register {
            worker: worker as u32,
            frequency: 1.0 / config.slowdown_factors[worker],
        },
    )?;
    let layout = nn_core::layout_of(network);
    let mut samples: Vec<usize> = Vec::new();
    let mut seen_batches = 0u16;
    let mut global_version = 0u64;
    let mut global: Option<ParameterSetF64> = None;
    let work = inner_parallel::sample_work_units(network, dataset[0].0.shape())?;

    let mut read_reply = |samples: &mut Vec<usize>,
                          seen: &mut u16,
                          version: &mut u64|
     -> Result<ParameterSetF64, RuntimeError> {
        loop {
            match read_frame(&mut reader)? {
                WireMessage::AllocBatch { batch, ranges } => {
                    if batch > *seen {
                        *seen = batch;
                        for (s, e) in ranges {
                            samples.extend((s..e).map(|i| pool_order[i as usize]));
                        }
                    }
                }
                WireMessage::GlobalWeights { version: v, values } => {
                    *version = v as u64;
                    return Ok(ParameterSetF64::new(values, layout.clone())?);
                }
                other => {
                    return Err(RuntimeError::BadConfig(format!(
                        "worker expected allocation or weights, got type {}",
                        other.type_byte()
                    )))
                }
            }
        }
    };

    for iter in 1..=k_total {
        if global.is_none() {
            global = Some(read_reply(&mut samples, &mut seen_batches, &mut global_version)?);
        }
        let started = Instant::now();
        let (local, q, _) = worker_epoch(
            network,
            global.as_ref().unwrap(),
            &samples,
            dataset,
            validation,
            classes,
            config.pool_size,
            work,
            config.slowdown_factors[worker],
            worker,
        )?;
        let wall = started.elapsed().as_secs_f64().max(1e-9);
        write_frame(
            &mut writer,
            &WireMessage::IterTime {
                worker: worker as u32,
                iter: iter as u32,
                duration: wall,
            },
        )?;
        write_frame(
            &mut writer,
            &WireMessage::LocalSubmit {
                worker: worker as u32,
                base_version: global_version as u32,
                values: local.values().to_vec(),
                accuracy: q,
                duration: wall,
            },
        )?;
        global = Some(read_reply(&mut samples, &mut seen_batches, &mut global_version)?);
    }
    write_frame(&mut writer, &WireMessage::Shutdown)?;
    Ok(())
}

/// Runs the cluster with real worker threads over loopback sockets,
/// measuring wall-clock durations. `listen` defaults to an ephemeral
/// loopback port; address and port come from configuration only.
pub fn run_training_tcp(
    config: &ClusterConfig,
    samples: &[Sample],
    network: &NetworkF64,
    eval_set: Option<&[Sample]>,
    listen: Option<&str>,
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
    let (validation_idx, pool_order) =
        seeded_split(config.seed, samples.len(), config.validation_limit, m);
    let validation: Vec<Sample> = validation_idx.iter().map(|&i| samples[i].clone()).collect();
    let n_train = pool_order.len() as u64;
    let k_total = config.total_iterations()?;

    let initial = nn_core::flatten(network);
    let (planner, static_plan): (Option<IdpaPlanner>, Option<PartitionPlan>) =
        match config.partition {
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

    let listener = TcpListener::bind(listen.unwrap_or("127.0.0.1:0"))?;
    let addr = listener.local_addr()?;
    let shared = Arc::new(Shared {
        inner: Mutex::new(ServerInner {
            pserver: ParameterServer::new(config.strategy, m, initial.clone(), config.store_capacity),
            planner,
            batches: static_plan
                .as_ref()
                .map(|p| p.ranges.clone())
                .unwrap_or_default(),
            durations: BTreeMap::new(),
            last_iter: BTreeMap::new(),
            epoch_done: BTreeMap::new(),
            epoch_snapshots: BTreeMap::new(),
            sgwu_generation: 0,
            started_at: Instant::now(),
            failure: None,
        }),
        cv: Condvar::new(),
        workers: m,
        total_batches: match config.partition {
            PartitionStrategy::Idpa => config.batches,
            PartitionStrategy::Udpa => 1,
        },
    });

    let layout = initial.layout().to_vec();
    let run_result: Result<(), RuntimeError> = std::thread::scope(|scope| {
        let mut worker_handles = Vec::new();
        for j in 0..m {
            let validation = &validation;
            let pool_order = &pool_order;
            let network_ref = network;
            worker_handles.push(scope.spawn(move || {
                run_worker(
                    addr,
                    j,
                    config,
                    samples,
                    pool_order,
                    validation,
                    network_ref,
                    classes,
                    k_total,
                )
            }));
        }
        let mut server_handles = Vec::new();
        for _ in 0..m {
            let (stream, _) = listener.accept()?;
            let shared = Arc::clone(&shared);
            let layout = layout.clone();
            server_handles.push(scope.spawn(move || handle_connection(shared, stream, layout)));
        }
        for h in worker_handles {
            h.join()
                .map_err(|_| RuntimeError::BadConfig("worker thread panicked".into()))??;
        }
        for h in server_handles {
            h.join()
                .map_err(|_| RuntimeError::BadConfig("server thread panicked".into()))??;
        }
        Ok(())
    });
    run_result?;

    let inner = Arc::into_inner(shared)
        .expect("all cluster threads joined")
        .inner
        .into_inner()
        .unwrap();
    let mut iteration_times = Vec::new();
    for (_iter, row) in inner.durations.iter() {
        let mut v = vec![0.0; m];
        for (&w, &d) in row {
            v[w] = d;
        }
        iteration_times.push(v);
    }
    let eval_fallback = validation;
    let eval_set = eval_set.unwrap_or(&eval_fallback);
    let mut epochs = Vec::new();
    let mut total_wait = 0.0;
    for (idx, row) in iteration_times.iter().enumerate() {
        let epoch = idx as u64 + 1;
        let max = row.iter().cloned().fold(0.0, f64::max);
        let wait: f64 = if config.strategy == Strategy::Sgwu {
            row.iter().map(|d| max - d).sum()
        } else {
            0.0
        };
        total_wait += wait;
        let rates: Vec<f64> = row.iter().filter(|&&d| d > 0.0).map(|&d| 1.0 / d).collect();
        let balance = if rates.is_empty() {
            1.0
        } else {
            crate::runtime::workload_balance(&rates).unwrap_or(1.0)
        };
        let (accuracy, auc, wall) = match inner.epoch_snapshots.get(&epoch) {
            Some((params, wall)) => {
                let ev = nn_core::evaluate_with_params(network, params, eval_set)?;
                (ev.accuracy, ev.auc, *wall)
            }
            None => (0.0, 0.0, 0.0),
        };
        epochs.push(MetricsRecord {
            epoch,
            makespan: wall,
            sync_wait: wait,
            comm_units: inner.pserver.transfers() * config.unit_comm_cost,
            comm_bytes: 0,
            balance,
            accuracy,
            auc,
        });
    }
    let partition_plan = match (&inner.planner, static_plan) {
        (Some(p), _) => p.plan().clone(),
        (None, Some(p)) => p,
        (None, None) => unreachable!(),
    };
    Ok(RunReport {
        strategy: config.strategy,
        partition: config.partition,
        epochs,
        iteration_times,
        final_weights: inner.pserver.latest().clone(),
        transfers: inner.pserver.transfers(),
        comm_bytes: 0,
        total_sync_wait: total_wait,
        makespan: inner.started_at.elapsed().as_secs_f64(),
        update_records: inner.pserver.records().to_vec(),
        partition_plan,
    })
}
