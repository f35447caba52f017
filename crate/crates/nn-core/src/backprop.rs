//! Backpropagated error signals and parameter gradients.
//!
//! Deltas follow the error-signal convention `delta = -dE/dnet`: the output
//! layer carries `2 (label - output) * f'(net)` and hidden layers receive the
//! usual linear propagation (full correlation with 180-degree-rotated filters
//! for conv layers, argmax routing or uniform spread for pooling, transpose
//! propagation for dense layers). Parameter gradients are returned as the
//! true `dE/dw`, so `sgd_step` descends and central finite differences of the
//! loss reproduce them directly.
//!
//! Every delta and gradient element is produced by one gather-style kernel
//! call with a fixed iteration order, so tiled execution matches the
//! sequential path bit for bit.

use crate::error::NnError;
use crate::layer::{ConvFilter, Layer, PoolKind};
use crate::network::{ForwardTrace, Network};
use crate::params::{layout_of, ParameterSet};
use crate::scalar::Scalar;
use crate::tensor::{Mat, Tensor3};

/// Per-layer error signals, aligned with the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Deltas<T> {
    pub per_layer: Vec<Tensor3<T>>,
}

/// Inclusive range of output rows/columns whose windows cover padded input
/// position `p`, for window extent `extent` and the given stride.
#[inline]
fn covering_range(p: usize, extent: usize, stride: usize, out_len: usize) -> (usize, usize) {
    let lo = if p + 1 > extent {
        (p + 1 - extent).div_ceil(stride)
    } else {
        0
    };
    let hi = (p / stride).min(out_len.saturating_sub(1));
    (lo, hi)
}

/// Contribution of a conv layer's deltas to one element of its input,
/// before the input layer's activation derivative is applied.
#[inline]
pub fn conv_input_grad_at<T: Scalar>(
    deltas: &Tensor3<T>,
    filters: &[ConvFilter<T>],
    stride: usize,
    padding: usize,
    d: usize,
    r: usize,
    c: usize,
) -> T {
    let (_, ha, wa) = deltas.shape();
    let (_, fh, fw) = filters[0].weights.shape();
    let pr = r + padding;
    let pc = c + padding;
    let (i_lo, i_hi) = covering_range(pr, fh, stride, ha);
    let (j_lo, j_hi) = covering_range(pc, fw, stride, wa);
    let mut acc = T::zero();
    for (fi, filter) in filters.iter().enumerate() {
        let mut i = i_lo;
        while i <= i_hi {
            let m = pr - i * stride;
            let mut j = j_lo;
            while j <= j_hi {
                let n = pc - j * stride;
                acc += deltas.get(fi, i, j) * filter.weights.get(d, m, n);
                j += 1;
            }
            i += 1;
        }
    }
    acc
}

/// Contribution of a pool layer's deltas to one element of its input.
/// Max pooling routes each window's delta to the recorded argmax; mean
/// pooling spreads it uniformly over the window.
#[inline]
pub fn pool_input_grad_at<T: Scalar>(
    deltas: &Tensor3<T>,
    argmax: &[usize],
    kind: PoolKind,
    window: usize,
    stride: usize,
    input: &Tensor3<T>,
    d: usize,
    r: usize,
    c: usize,
) -> T {
    let (_, ho, wo) = deltas.shape();
    let (i_lo, i_hi) = covering_range(r, window, stride, ho);
    let (j_lo, j_hi) = covering_range(c, window, stride, wo);
    let flat = input.flat_index(d, r, c);
    let denom = T::from_f64((window * window) as f64);
    let mut acc = T::zero();
    let mut i = i_lo;
    while i <= i_hi {
        let mut j = j_lo;
        while j <= j_hi {
            match kind {
                PoolKind::Max => {
                    if argmax[(d * ho + i) * wo + j] == flat {
                        acc += deltas.get(d, i, j);
                    }
                }
                PoolKind::Mean => {
                    acc += deltas.get(d, i, j) / denom;
                }
            }
            j += 1;
        }
        i += 1;
    }
    acc
}

/// Contribution of a dense layer's deltas to one input element (transpose
/// propagation).
#[inline]
pub fn dense_input_grad_at<T: Scalar>(deltas: &[T], weights: &Mat<T>, i: usize) -> T {
    let mut acc = T::zero();
    for o in 0..weights.rows() {
        acc += deltas[o] * weights.get(o, i);
    }
    acc
}

/// True gradient dE/dw of one conv filter weight (filter `fi`, position
/// (d, m, n)), given the layer's error signals and its input.
#[inline]
pub fn conv_weight_grad_at<T: Scalar>(
    deltas: &Tensor3<T>,
    input: &Tensor3<T>,
    stride: usize,
    padding: usize,
    fi: usize,
    d: usize,
    m: usize,
    n: usize,
) -> T {
    let (_, ha, wa) = deltas.shape();
    let mut acc = T::zero();
    for i in 0..ha {
        for j in 0..wa {
            acc += deltas.get(fi, i, j) * input.get_padded(d, i * stride + m, j * stride + n, padding);
        }
    }
    -acc
}

/// True gradient dE/dw_b of one conv filter's bias.
#[inline]
pub fn conv_bias_grad<T: Scalar>(deltas: &Tensor3<T>, fi: usize) -> T {
    let (_, ha, wa) = deltas.shape();
    let mut acc = T::zero();
    for i in 0..ha {
        for j in 0..wa {
            acc += deltas.get(fi, i, j);
        }
    }
    -acc
}

/// Error signals for every layer given a forward trace and the target vector.
pub fn backward_pass<T: Scalar>(
    network: &Network<T>,
    trace: &ForwardTrace<T>,
    labels: &[T],
) -> Result<Deltas<T>, NnError> {
    let n_layers = network.layers.len();
    if trace.layers.len() != n_layers {
        return Err(NnError::ShapeMismatch {
            expected: format!("trace with {n_layers} layers"),
            got: format!("{}", trace.layers.len()),
        });
    }
    let last = trace
        .layers
        .last()
        .ok_or(NnError::InvalidGeometry("network has no layers".into()))?;
    if labels.len() != last.output.len() {
        return Err(NnError::LengthMismatch {
            expected: last.output.len(),
            got: labels.len(),
        });
    }

    let mut per_layer: Vec<Tensor3<T>> = vec![Tensor3::zeros(1, 1, 1); n_layers];

    // Output layer: delta = 2 (label - output) f'(net).
    {
        let (d, h, w) = last.net.shape();
        let mut delta = Tensor3::zeros(d, h, w);
        let act = Network::activation_of(&network.layers[n_layers - 1]);
        for (idx, ((y_true, y), net)) in labels
            .iter()
            .zip(last.output.as_slice())
            .zip(last.net.as_slice())
            .enumerate()
        {
            let fprime = act.map_or(T::one(), |a| a.derivative(*net));
            delta.as_mut_slice()[idx] = T::two() * (*y_true - *y) * fprime;
        }
        per_layer[n_layers - 1] = delta;
    }

    // Hidden layers, walking backwards.
    for l in (1..n_layers).rev() {
        let upstream = propagate_input_grad(&network.layers[l], &per_layer[l], trace, l)?;
        let prev_trace = &trace.layers[l - 1];
        let act = Network::activation_of(&network.layers[l - 1]);
        let mut delta = upstream;
        if let Some(a) = act {
            for (v, net) in delta.as_mut_slice().iter_mut().zip(prev_trace.net.as_slice()) {
                *v = *v * a.derivative(*net);
            }
        }
        per_layer[l - 1] = delta;
    }

    Ok(Deltas { per_layer })
}

/// Propagates layer `l`'s deltas to the gradient w.r.t. its input activations
/// (before the previous layer's f' is applied).
pub fn propagate_input_grad<T: Scalar>(
    layer: &Layer<T>,
    deltas: &Tensor3<T>,
    trace: &ForwardTrace<T>,
    l: usize,
) -> Result<Tensor3<T>, NnError> {
    let input = trace.layer_input(l);
    let (id, ih, iw) = input.shape();
    let mut out = Tensor3::zeros(id, ih, iw);
    match layer {
        Layer::Conv {
            filters,
            stride,
            padding,
            ..
        } => {
            for d in 0..id {
                for r in 0..ih {
                    for c in 0..iw {
                        out.set(
                            d,
                            r,
                            c,
                            conv_input_grad_at(deltas, filters, *stride, *padding, d, r, c),
                        );
                    }
                }
            }
        }
        Layer::Pool {
            kind,
            window,
            stride,
        } => {
            let argmax = &trace.layers[l].pool_argmax;
            for d in 0..id {
                for r in 0..ih {
                    for c in 0..iw {
                        out.set(
                            d,
                            r,
                            c,
                            pool_input_grad_at(deltas, argmax, *kind, *window, *stride, input, d, r, c),
                        );
                    }
                }
            }
        }
        Layer::Dense { weights, .. } => {
            let dvec = deltas.as_slice();
            for i in 0..input.len() {
                out.as_mut_slice()[i] = dense_input_grad_at(dvec, weights, i);
            }
        }
    }
    Ok(out)
}

/// True parameter gradients dE/dw for every trainable weight, assembled in
/// canonical parameter order from the error signals.
pub fn param_gradients<T: Scalar>(
    network: &Network<T>,
    trace: &ForwardTrace<T>,
    deltas: &Deltas<T>,
) -> Result<ParameterSet<T>, NnError> {
    if deltas.per_layer.len() != network.layers.len() {
        return Err(NnError::ShapeMismatch {
            expected: format!("{} delta layers", network.layers.len()),
            got: format!("{}", deltas.per_layer.len()),
        });
    }
    let mut values = Vec::new();
    for (l, layer) in network.layers.iter().enumerate() {
        let delta = &deltas.per_layer[l];
        let input = trace.layer_input(l);
        match layer {
            Layer::Conv {
                filters,
                stride,
                padding,
                ..
            } => {
                let (fd, fh, fw) = filters[0].weights.shape();
                for fi in 0..filters.len() {
                    for d in 0..fd {
                        for m in 0..fh {
                            for n in 0..fw {
                                values.push(conv_weight_grad_at(
                                    delta, input, *stride, *padding, fi, d, m, n,
                                ));
                            }
                        }
                    }
                    values.push(conv_bias_grad(delta, fi));
                }
            }
            Layer::Pool { .. } => {}
            Layer::Dense { weights, .. } => {
                let dvec = delta.as_slice();
                let avec = input.as_slice();
                for o in 0..weights.rows() {
                    for i in 0..weights.cols() {
                        values.push(-(dvec[o] * avec[i]));
                    }
                }
                for o in 0..weights.rows() {
                    values.push(-dvec[o]);
                }
            }
        }
    }
    ParameterSet::new(values, layout_of(network))
}

/// Forward, backward, gradient, and SGD update for one (input, target) pair.
/// Returns the squared-error loss before the update.
pub fn train_one_sample<T: Scalar>(
    network: &mut Network<T>,
    input: &Tensor3<T>,
    labels: &[T],
) -> Result<T, NnError> {
    let trace = network.forward(input)?;
    let loss = crate::layer::loss_squared_error(labels, &trace.output_vec())?;
    let deltas = backward_pass(network, &trace, labels)?;
    let grads = param_gradients(network, &trace, &deltas)?;
    let params = crate::params::flatten(network);
    let updated = crate::params::sgd_step(&params, &grads, network.learning_rate)?;
    crate::params::apply(&updated, network)?;
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::ActivationKind;
    use crate::network::one_hot;

    fn single_neuron_net(w: f64) -> Network<f64> {
        Network::new(
            vec![Layer::Dense {
                weights: Mat::from_vec(1, 1, vec![w]).unwrap(),
                bias: vec![0.0],
                activation: ActivationKind::Linear,
            }],
            0.1,
        )
    }

    #[test]
    fn zero_error_means_zero_deltas() {
        let net = single_neuron_net(2.0);
        let x = Tensor3::from_vec(1, 1, 1, vec![0.25]).unwrap();
        let trace = net.forward(&x).unwrap();
        let y = trace.output_vec();
        let deltas = backward_pass(&net, &trace, &y).unwrap();
        assert!(deltas.per_layer[0].as_slice().iter().all(|&v| v == 0.0));
        let grads = param_gradients(&net, &trace, &deltas).unwrap();
        assert!(grads.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_delta_is_twice_the_error() {
        // linear output 0.5 against label 1.0: delta = 2 (1 - 0.5) * 1 = 1.0
        let net = single_neuron_net(0.5);
        let x = Tensor3::from_vec(1, 1, 1, vec![1.0]).unwrap();
        let trace = net.forward(&x).unwrap();
        let deltas = backward_pass(&net, &trace, &[1.0]).unwrap();
        assert_eq!(deltas.per_layer[0].as_slice(), &[1.0]);
    }

    // With error signals fixed at one over a 2x2 map and input [[1,2],[3,4]]
    // through a 1x1 filter, dE/dnet = -1 everywhere, so the true weight
    // gradient is -(1+2+3+4) and the bias gradient is -4. (The magnitudes are
    // the classic hand sums 10 and 4.)
    #[test]
    fn conv_weight_gradient_hand_sum() {
        let input = Tensor3::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let deltas = Tensor3::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let w: f64 = conv_weight_grad_at(&deltas, &input, 1, 0, 0, 0, 0, 0);
        let b: f64 = conv_bias_grad(&deltas, 0);
        assert_eq!(w, -10.0);
        assert_eq!(b, -4.0);
        assert_eq!(w.abs(), 10.0);
        assert_eq!(b.abs(), 4.0);
    }

    #[test]
    fn training_step_descends() {
        let mut net = single_neuron_net(0.5);
        let x = Tensor3::from_vec(1, 1, 1, vec![1.0]).unwrap();
        let before = train_one_sample(&mut net, &x, &[1.0]).unwrap();
        let after_trace = net.forward(&x).unwrap();
        let after = crate::layer::loss_squared_error(&[1.0], &after_trace.output_vec()).unwrap();
        assert!(after < before, "loss rose from {before} to {after}");
    }

    #[test]
    fn one_hot_targets() {
        assert_eq!(one_hot::<f64>(1, 3), vec![0.0, 1.0, 0.0]);
    }
}
