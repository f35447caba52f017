//! End-to-end behavior of the simulated cluster.

use cluster_runtime::{
    run_training, seeded_split, workload_balance, ClusterConfig, PartitionStrategy, Sample,
    Strategy, TransportMode,
};
use nn_core::{
    one_hot, ActivationKind, ConvFilter, Layer, Mat, Network, NetworkF64, PoolKind, Tensor3,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_network(seed: u64) -> NetworkF64 {
    let mut net = Network::new(
        vec![
            Layer::Conv {
                filters: (0..2)
                    .map(|_| ConvFilter {
                        weights: Tensor3::zeros(1, 3, 3),
                        bias: 0.0,
                    })
                    .collect(),
                stride: 1,
                padding: 1,
                activation: ActivationKind::Tanh,
            },
            Layer::Pool {
                kind: PoolKind::Max,
                window: 2,
                stride: 2,
            },
            Layer::Dense {
                weights: Mat::zeros(3, 2 * 3 * 3),
                bias: vec![0.0; 3],
                activation: ActivationKind::Sigmoid,
            },
        ],
        0.3,
    );
    nn_core::initialize_weights(&mut net, seed);
    net
}

/// Tiny 3-class synthetic set of 6x6 images: class = which corner block is
/// bright, plus seeded noise.
fn tiny_dataset(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let class = i % 3;
            let mut values = vec![0.0f64; 36];
            for v in values.iter_mut() {
                *v = rng.gen_range(0.0..0.15);
            }
            let (r0, c0) = [(0, 0), (0, 3), (3, 0)][class];
            for r in 0..3 {
                for c in 0..3 {
                    values[(r0 + r) * 6 + (c0 + c)] = 0.85 + rng.gen_range(0.0..0.15);
                }
            }
            (Tensor3::from_vec(1, 6, 6, values).unwrap(), class)
        })
        .collect()
}

fn config(m: usize, strategy: Strategy, partition: PartitionStrategy, k: u64) -> ClusterConfig {
    ClusterConfig {
        workers: m,
        strategy,
        partition,
        batches: 3,
        iterations: k,
        slowdown_factors: vec![1.0; m],
        pool_size: 1,
        seed: 11,
        unit_comm_cost: 1,
        store_capacity: None,
        validation_limit: 12,
        transport: TransportMode::InProcess,
    }
}

#[test]
fn single_worker_matches_sequential_sgd_bitwise() {
    let dataset = tiny_dataset(40, 5);
    let network = tiny_network(7);
    for strategy in [Strategy::Sgwu, Strategy::Agwu] {
        let cfg = config(1, strategy, PartitionStrategy::Udpa, 4);
        let report = run_training(&cfg, &dataset, &network, None).unwrap();

        // sequential oracle over the same shuffled training pool
        let (_, pool) = seeded_split(cfg.seed, dataset.len(), cfg.validation_limit, 1);
        let mut net = network.clone();
        for _ in 0..4 {
            for &idx in &pool {
                let (x, label) = &dataset[idx];
                let target = one_hot::<f64>(*label, 3);
                nn_core::train_one_sample(&mut net, x, &target).unwrap();
            }
        }
        let expected = nn_core::flatten(&net);
        assert_eq!(
            report.final_weights.params.values(),
            expected.values(),
            "{strategy:?} differs from the sequential loop"
        );
    }
}

#[test]
fn sgwu_creates_exactly_k_versions_with_barrier() {
    let dataset = tiny_dataset(60, 6);
    let network = tiny_network(8);
    let cfg = config(3, Strategy::Sgwu, PartitionStrategy::Udpa, 5);
    let report = run_training(&cfg, &dataset, &network, None).unwrap();
    assert_eq!(report.final_weights.version, 5);
    assert_eq!(report.epochs.len(), 5);
    // merge records: one per contributing worker per version
    assert_eq!(report.update_records.len(), 3 * 5);
    for record in &report.update_records {
        // under the barrier every contribution is based on the previous version
        assert_eq!(record.base_version + 1, record.version);
    }
}

#[test]
fn agwu_version_count_equals_total_completions() {
    let dataset = tiny_dataset(60, 9);
    let network = tiny_network(4);
    let cfg = config(3, Strategy::Agwu, PartitionStrategy::Udpa, 5);
    let report = run_training(&cfg, &dataset, &network, None).unwrap();
    assert_eq!(report.final_weights.version, 3 * 5);
    assert_eq!(report.update_records.len(), 3 * 5);
    // versions advance one at a time, gap-free
    for (i, r) in report.update_records.iter().enumerate() {
        assert_eq!(r.version, i as u64 + 1);
    }
}

#[test]
fn transfer_count_is_2mk_for_all_strategy_partition_pairs() {
    let dataset = tiny_dataset(80, 10);
    let network = tiny_network(3);
    for strategy in [Strategy::Sgwu, Strategy::Agwu] {
        for partition in [PartitionStrategy::Udpa, PartitionStrategy::Idpa] {
            let cfg = config(4, strategy, partition, 6);
            let report = run_training(&cfg, &dataset, &network, None).unwrap();
            let k_total = cfg.total_iterations().unwrap();
            assert_eq!(report.iteration_times.len(), k_total as usize);
            assert_eq!(
                report.transfers,
                2 * 4 * k_total,
                "{strategy:?}/{partition:?}"
            );
            // cumulative comm never decreases
            let mut last = 0;
            for e in &report.epochs {
                assert!(e.comm_units >= last);
                last = e.comm_units;
            }
        }
    }
}

#[test]
fn framed_and_in_process_transports_agree_bit_for_bit() {
    let dataset = tiny_dataset(50, 12);
    let network = tiny_network(6);
    for strategy in [Strategy::Sgwu, Strategy::Agwu] {
        let mut cfg = config(2, strategy, PartitionStrategy::Idpa, 5);
        cfg.slowdown_factors = vec![1.0, 2.0];
        let in_proc = run_training(&cfg, &dataset, &network, None).unwrap();
        cfg.transport = TransportMode::Framed;
        let framed = run_training(&cfg, &dataset, &network, None).unwrap();
        assert_eq!(
            in_proc.final_weights.params.values(),
            framed.final_weights.params.values()
        );
        assert_eq!(in_proc.epochs, framed.epochs);
        assert_eq!(in_proc.iteration_times, framed.iteration_times);
        let mut a = Vec::new();
        let mut b = Vec::new();
        in_proc.write_metrics_jsonl(&mut a).unwrap();
        framed.write_metrics_jsonl(&mut b).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn identical_runs_emit_identical_metrics_bytes() {
    let dataset = tiny_dataset(50, 13);
    let network = tiny_network(9);
    let mut cfg = config(3, Strategy::Agwu, PartitionStrategy::Idpa, 6);
    cfg.slowdown_factors = vec![1.0, 1.5, 3.0];
    let r1 = run_training(&cfg, &dataset, &network, None).unwrap();
    let r2 = run_training(&cfg, &dataset, &network, None).unwrap();
    let mut a = Vec::new();
    let mut b = Vec::new();
    r1.write_metrics_jsonl(&mut a).unwrap();
    r2.write_metrics_jsonl(&mut b).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert_eq!(
        r1.final_weights.params.values(),
        r2.final_weights.params.values()
    );
}

#[test]
fn simulated_heterogeneity_scales_iteration_times_exactly() {
    let dataset = tiny_dataset(48, 14);
    let network = tiny_network(2);
    let mut cfg = config(2, Strategy::Sgwu, PartitionStrategy::Udpa, 3);
    cfg.slowdown_factors = vec![1.0, 2.0];
    let report = run_training(&cfg, &dataset, &network, None).unwrap();
    // equal sample counts per worker (UDPA), so the duration columns sit at
    // exactly the slowdown ratio
    for row in report.measured_iteration_times() {
        assert_eq!(row.len(), 2);
        assert!((row[1] / row[0] - 2.0).abs() < 1e-12);
    }
    // the same matrix reproduces the recorded sync wait
    let wait = weight_sync::sync_wait_time(report.measured_iteration_times()).unwrap();
    assert!((wait - report.total_sync_wait).abs() < 1e-9);
    assert!(report.total_sync_wait > 0.0);
}

#[test]
fn single_worker_has_zero_sync_wait_and_unit_balance() {
    let dataset = tiny_dataset(30, 15);
    let network = tiny_network(1);
    let cfg = config(1, Strategy::Sgwu, PartitionStrategy::Udpa, 3);
    let report = run_training(&cfg, &dataset, &network, None).unwrap();
    assert_eq!(report.total_sync_wait, 0.0);
    for e in &report.epochs {
        assert_eq!(e.balance, 1.0);
    }
}

#[test]
fn workload_balance_examples() {
    assert_eq!(workload_balance(&[2.0, 2.0, 2.0]).unwrap(), 1.0);
    assert_eq!(workload_balance(&[1.0, 1.0, 0.5, 0.25]).unwrap(), 0.6875);
    assert_eq!(workload_balance(&[7.0]).unwrap(), 1.0);
    assert!(workload_balance(&[]).is_err());
    assert!(workload_balance(&[1.0, 0.0]).is_err());
}

#[test]
fn agwu_free_run_beats_or_ties_sgwu_makespan() {
    let dataset = tiny_dataset(64, 16);
    let network = tiny_network(5);
    for partition in [PartitionStrategy::Udpa, PartitionStrategy::Idpa] {
        let mut sg = config(4, Strategy::Sgwu, partition, 6);
        sg.slowdown_factors = vec![1.0, 1.0, 2.0, 4.0];
        let mut ag = sg.clone();
        ag.strategy = Strategy::Agwu;
        let sgwu = run_training(&sg, &dataset, &network, None).unwrap();
        let agwu = run_training(&ag, &dataset, &network, None).unwrap();
        assert!(
            agwu.makespan <= sgwu.makespan + 1e-9,
            "{partition:?}: AGWU {} vs SGWU {}",
            agwu.makespan,
            sgwu.makespan
        );
    }
}

#[test]
fn worker_failure_aborts_with_diagnostic() {
    // a learning rate large enough to blow sigmoid nets up is hard to build
    // deterministically; instead poison the dataset with a non-finite pixel
    let mut dataset = tiny_dataset(30, 17);
    let broken = vec![f64::NAN; 36];
    dataset[5] = (Tensor3::from_vec(1, 6, 6, broken).unwrap(), 0);
    let network = tiny_network(5);
    let cfg = config(2, Strategy::Sgwu, PartitionStrategy::Udpa, 2);
    let err = run_training(&cfg, &dataset, &network, None).unwrap_err();
    let text = err.to_string();
    assert!(text.contains("worker"), "unexpected error: {text}");
}
