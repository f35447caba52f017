//! Central finite-difference oracles for deltas and parameter gradients.
//!
//! The oracles below re-run the forward pass with perturbed weighted inputs
//! or parameters and never touch the backpropagation code they check.

use nn_core::{
    apply, backward_pass, flatten, forward_layer, initialize_weights, loss_squared_error, one_hot,
    param_gradients, ActivationKind, ConvFilter, Layer, Mat, Network, PoolKind, Tensor3,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-6;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn random_input(rng: &mut ChaCha8Rng, d: usize, h: usize, w: usize) -> Tensor3<f64> {
    let values = (0..d * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor3::from_vec(d, h, w, values).unwrap()
}

/// Two-conv / one-pool / one-dense network over a (2, 6, 6) input.
fn test_network(pool: PoolKind, seed: u64) -> Network<f64> {
    let conv = |filters: usize, depth: usize, k: usize, act| Layer::Conv {
        filters: (0..filters)
            .map(|_| ConvFilter {
                weights: Tensor3::zeros(depth, k, k),
                bias: 0.0,
            })
            .collect(),
        stride: 1,
        padding: if k == 3 { 1 } else { 0 },
        activation: act,
    };
    let mut net = Network::new(
        vec![
            conv(3, 2, 3, ActivationKind::Tanh),
            Layer::Pool {
                kind: pool,
                window: 2,
                stride: 2,
            },
            conv(2, 3, 2, ActivationKind::Sigmoid),
            Layer::Dense {
                weights: Mat::zeros(4, 8),
                bias: vec![0.0; 4],
                activation: ActivationKind::Sigmoid,
            },
        ],
        0.1,
    );
    initialize_weights(&mut net, seed);
    net
}

/// Loss after adding `h` to one element of layer `layer`'s weighted input,
/// recomputing that layer's output from the perturbed net and continuing the
/// forward pass. Independent of the backward-pass implementation.
fn loss_with_net_perturbation(
    net: &Network<f64>,
    x: &Tensor3<f64>,
    labels: &[f64],
    layer: usize,
    idx: usize,
    h: f64,
) -> f64 {
    let mut current = x.clone();
    for (l, lay) in net.layers.iter().enumerate() {
        let mut tr = forward_layer(lay, &current).unwrap();
        if l == layer {
            tr.net.as_mut_slice()[idx] += h;
            let activation = match lay {
                Layer::Conv { activation, .. } | Layer::Dense { activation, .. } => {
                    Some(*activation)
                }
                Layer::Pool { .. } => None,
            };
            let mut out = tr.net.clone();
            if let Some(a) = activation {
                for v in out.as_mut_slice() {
                    *v = a.value(*v);
                }
            }
            tr.output = out;
        }
        current = tr.output;
    }
    loss_squared_error(labels, current.as_slice()).unwrap()
}

fn loss_with_params(net: &Network<f64>, params: &nn_core::ParameterSet<f64>, x: &Tensor3<f64>, labels: &[f64]) -> f64 {
    let mut probe = net.clone();
    apply(params, &mut probe).unwrap();
    let trace = probe.forward(x).unwrap();
    loss_squared_error(labels, &trace.output_vec()).unwrap()
}

#[test]
fn deltas_match_negated_central_differences() {
    for (pool, seed) in [(PoolKind::Max, 11u64), (PoolKind::Mean, 12u64)] {
        let net = test_network(pool, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let x = random_input(&mut rng, 2, 6, 6);
        let labels = one_hot::<f64>(2, 4);

        let trace = net.forward(&x).unwrap();
        let deltas = backward_pass(&net, &trace, &labels).unwrap();

        let mut worst = 0.0f64;
        for l in 0..net.layers.len() {
            // Max-pool nets are piecewise in their pre-pool nets; perturbing a
            // net element that is itself a window maximum is still smooth, and
            // the seeds used here keep margins far above h.
            for idx in 0..deltas.per_layer[l].len() {
                let up = loss_with_net_perturbation(&net, &x, &labels, l, idx, H);
                let down = loss_with_net_perturbation(&net, &x, &labels, l, idx, -H);
                let fd = -(up - down) / (2.0 * H);
                let an = deltas.per_layer[l].as_slice()[idx];
                worst = worst.max(rel_err(fd, an));
                assert!(
                    rel_err(fd, an) <= TOL,
                    "layer {l} idx {idx}: fd {fd} vs analytic {an}"
                );
            }
        }
        println!("pool {pool:?}: worst delta relative error {worst:.3e}");
    }
}

#[test]
fn param_gradients_match_central_differences() {
    for (pool, seed) in [(PoolKind::Max, 21u64), (PoolKind::Mean, 22u64)] {
        let net = test_network(pool, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let x = random_input(&mut rng, 2, 6, 6);
        let labels = one_hot::<f64>(0, 4);

        let trace = net.forward(&x).unwrap();
        let deltas = backward_pass(&net, &trace, &labels).unwrap();
        let grads = param_gradients(&net, &trace, &deltas).unwrap();
        let base = flatten(&net);

        let mut worst = 0.0f64;
        for k in 0..base.len() {
            let mut up = base.clone();
            up.values_mut()[k] += H;
            let mut down = base.clone();
            down.values_mut()[k] -= H;
            let fd = (loss_with_params(&net, &up, &x, &labels)
                - loss_with_params(&net, &down, &x, &labels))
                / (2.0 * H);
            let an = grads.values()[k];
            worst = worst.max(rel_err(fd, an));
            assert!(rel_err(fd, an) <= TOL, "param {k}: fd {fd} vs analytic {an}");
        }
        println!("pool {pool:?}: worst gradient relative error {worst:.3e}");
    }
}

#[test]
fn forward_shapes_match_shape_algebra() {
    let net = test_network(PoolKind::Max, 31);
    let shapes = net.validate((2, 6, 6)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(131);
    let x = random_input(&mut rng, 2, 6, 6);
    let trace = net.forward(&x).unwrap();
    for (tr, shape) in trace.layers.iter().zip(&shapes) {
        assert_eq!(tr.output.shape(), *shape);
        assert_eq!(tr.net.shape(), *shape);
    }
}

#[test]
fn forward_backward_is_deterministic() {
    let net = test_network(PoolKind::Mean, 41);
    let mut rng = ChaCha8Rng::seed_from_u64(141);
    let x = random_input(&mut rng, 2, 6, 6);
    let labels = one_hot::<f64>(3, 4);
    let t1 = net.forward(&x).unwrap();
    let t2 = net.forward(&x).unwrap();
    assert_eq!(t1, t2);
    let d1 = backward_pass(&net, &t1, &labels).unwrap();
    let d2 = backward_pass(&net, &t2, &labels).unwrap();
    assert_eq!(d1, d2);
    let g1 = param_gradients(&net, &t1, &d1).unwrap();
    let g2 = param_gradients(&net, &t2, &d2).unwrap();
    assert_eq!(g1.values(), g2.values());
}

#[test]
fn trace_outputs_are_activated_nets() {
    let net = test_network(PoolKind::Max, 51);
    let mut rng = ChaCha8Rng::seed_from_u64(151);
    let x = random_input(&mut rng, 2, 6, 6);
    let trace = net.forward(&x).unwrap();
    for (lay, tr) in net.layers.iter().zip(&trace.layers) {
        match lay {
            Layer::Conv { activation, .. } | Layer::Dense { activation, .. } => {
                for (n, o) in tr.net.as_slice().iter().zip(tr.output.as_slice()) {
                    assert_eq!(activation.value(*n), *o);
                }
            }
            Layer::Pool { .. } => assert_eq!(tr.net, tr.output),
        }
    }
}

#[test]
fn loss_nonnegative_with_equality_iff_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    for _ in 0..200 {
        let n = rng.gen_range(1..6);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let t: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let loss = loss_squared_error(&t, &y).unwrap();
        assert!(loss >= 0.0);
        if loss == 0.0 {
            assert_eq!(t, y);
        }
        assert_eq!(loss_squared_error(&y, &y).unwrap(), 0.0);
    }
}

#[test]
fn parameter_roundtrip_over_random_networks() {
    for seed in 0..10u64 {
        let pool = if seed % 2 == 0 {
            PoolKind::Max
        } else {
            PoolKind::Mean
        };
        let net = test_network(pool, seed);
        let params = flatten(&net);
        let mut rebuilt = test_network(pool, seed + 999);
        apply(&params, &mut rebuilt).unwrap();
        assert_eq!(flatten(&rebuilt), params);
        assert_eq!(rebuilt, net);
    }
}
