//! Smoke test of the loopback socket transport with concurrent workers.

use cluster_runtime::{run_training_tcp, ClusterConfig, PartitionStrategy, Strategy, TransportMode};
use nn_core::{ActivationKind, Layer, Mat, Network, Tensor3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dataset(n: usize) -> Vec<cluster_runtime::Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    (0..n)
        .map(|i| {
            let class = i % 2;
            let mut values = vec![0.0f64; 16];
            for v in values.iter_mut() {
                *v = rng.gen_range(0.0..0.2);
            }
            if class == 1 {
                for v in values.iter_mut().take(8) {
                    *v += 0.7;
                }
            }
            (Tensor3::from_vec(1, 4, 4, values).unwrap(), class)
        })
        .collect()
}

fn network() -> Network<f64> {
    let mut net = Network::new(
        vec![Layer::Dense {
            weights: Mat::zeros(2, 16),
            bias: vec![0.0; 2],
            activation: ActivationKind::Sigmoid,
        }],
        0.5,
    );
    nn_core::initialize_weights(&mut net, 1);
    net
}

#[test]
fn loopback_cluster_completes_both_strategies() {
    let data = dataset(40);
    let net = network();
    for (strategy, partition) in [
        (Strategy::Sgwu, PartitionStrategy::Udpa),
        (Strategy::Agwu, PartitionStrategy::Udpa),
        (Strategy::Agwu, PartitionStrategy::Idpa),
    ] {
        let cfg = ClusterConfig {
            workers: 2,
            strategy,
            partition,
            batches: 2,
            iterations: 4,
            slowdown_factors: vec![1.0, 1.0],
            pool_size: 1,
            seed: 7,
            unit_comm_cost: 1,
            store_capacity: None,
            validation_limit: 4,
            transport: TransportMode::Framed,
        };
        let report = run_training_tcp(&cfg, &data, &net, None, None).unwrap();
        let k_total = cfg.total_iterations().unwrap();
        assert_eq!(report.iteration_times.len(), k_total as usize);
        assert_eq!(
            report.transfers,
            2 * 2 * k_total,
            "{strategy:?}/{partition:?}"
        );
        assert!(report.final_weights.version > 0);
        assert_eq!(report.epochs.len(), k_total as usize);
        assert!(report.makespan > 0.0);
    }
}
