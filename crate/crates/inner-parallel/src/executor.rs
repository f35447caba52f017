//! Bounded-pool execution of per-element kernels.
//!
//! Work is grouped into contiguous row chunks (the per-element task model is
//! kept for counting and duration accounting; grouping never changes numeric
//! results because every element is produced by one kernel call with a fixed
//! internal order, and chunks write disjoint output rows).

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Mutex;

use nn_core::backprop::{conv_input_grad_at, dense_input_grad_at, pool_input_grad_at};
use nn_core::layer::{conv_pre_activation, dense_pre_activation, pool_window_at};
use nn_core::{
    conv_output_shape, loss_squared_error, ActivationKind, ConvFilter, Deltas, ForwardTrace,
    Layer, LayerTrace, Network, NnError, Scalar, Tensor3,
};

use crate::error::ParallelError;
use crate::tiling::decompose_conv;

/// Min-workload makespan of a task list on `pool_size` executors: each task,
/// in order, goes to the least-loaded executor; the result is the largest
/// accumulated load. With one executor this is the sequential total; with
/// pool_size >= tasks it is the largest single cost.
pub fn simulate_makespan(costs: &[f64], pool_size: usize) -> f64 {
    if pool_size == 0 || costs.is_empty() {
        return 0.0;
    }
    let mut loads = vec![0.0f64; pool_size.min(costs.len())];
    for &c in costs {
        let mut best = 0usize;
        for (e, l) in loads.iter().enumerate() {
            if *l < loads[best] {
                best = e;
            }
        }
        loads[best] += c;
    }
    loads.iter().cloned().fold(0.0, f64::max)
}

/// Fills `out` (treated as `rows` rows of `row_len`) by calling
/// `kernel(row, col)` for every element, using up to `pool_size` threads.
/// Values are identical to a sequential double loop for any pool size.
fn run_chunked<T, F>(
    rows: usize,
    row_len: usize,
    out: &mut [T],
    pool_size: usize,
    kernel: F,
) -> Result<(), ParallelError>
where
    T: Send,
    F: Fn(usize, usize) -> T + Sync,
{
    debug_assert_eq!(out.len(), rows * row_len);
    if pool_size == 0 {
        return Err(ParallelError::EmptyPool);
    }
    let threads = pool_size.min(rows);
    if threads <= 1 {
        for r in 0..rows {
            for c in 0..row_len {
                out[r * row_len + c] = kernel(r, c);
            }
        }
        return Ok(());
    }
    let queue: Mutex<std::iter::Enumerate<std::slice::ChunksMut<'_, T>>> =
        Mutex::new(out.chunks_mut(row_len).enumerate());
    let result = catch_unwind(AssertUnwindSafe(|| {
        std::thread::scope(|scope| {
            for _ in 0..threads {
                scope.spawn(|| loop {
                    let item = queue.lock().unwrap().next();
                    match item {
                        Some((r, chunk)) => {
                            for (c, slot) in chunk.iter_mut().enumerate() {
                                *slot = kernel(r, c);
                            }
                        }
                        None => break,
                    }
                });
            }
        });
    }));
    result.map_err(|_| ParallelError::ExecutorFailure("worker thread panicked".into()))
}

/// Output of a tiled convolution plus its simulated duration in
/// multiply-accumulate units.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutedConv<T> {
    pub output: Tensor3<T>,
    pub task_count: usize,
    pub sim_duration: f64,
}

/// Executes one filter's convolution as independent per-element tasks on a
/// bounded pool. The output is bit-identical to `nn_core::conv_forward`; the
/// reported duration is the min-workload makespan of the per-element costs.
pub fn parallel_conv_execute<T: Scalar>(
    x: &Tensor3<T>,
    filter: &ConvFilter<T>,
    stride: usize,
    padding: usize,
    activation: ActivationKind,
    pool_size: usize,
) -> Result<ExecutedConv<T>, ParallelError> {
    parallel_conv_execute_costed(x, filter, stride, padding, activation, pool_size, None)
}

/// Like [`parallel_conv_execute`] with explicit per-task simulated costs
/// (defaults to the task's multiply-accumulate count).
pub fn parallel_conv_execute_costed<T: Scalar>(
    x: &Tensor3<T>,
    filter: &ConvFilter<T>,
    stride: usize,
    padding: usize,
    activation: ActivationKind,
    pool_size: usize,
    costs: Option<&[f64]>,
) -> Result<ExecutedConv<T>, ParallelError> {
    if pool_size == 0 {
        return Err(ParallelError::EmptyPool);
    }
    if filter.weights.depth() != x.depth() {
        return Err(ParallelError::Nn(NnError::ShapeMismatch {
            expected: format!("filter depth {}", x.depth()),
            got: format!("{}", filter.weights.depth()),
        }));
    }
    if !x.all_finite() {
        return Err(ParallelError::Nn(NnError::NonFinite("convolution input")));
    }
    let tasks = decompose_conv(x.shape(), filter.weights.shape(), stride, padding)?;
    let (fd, fh, fw) = filter.weights.shape();
    let mac = (fd * fh * fw) as f64;
    let sim_duration = match costs {
        Some(c) => simulate_makespan(c, pool_size),
        None => simulate_makespan(&vec![mac; tasks.len()], pool_size),
    };
    let (_, ha, wa) = conv_output_shape(x.shape(), filter.weights.shape(), stride, padding)
        .map_err(ParallelError::Nn)?;
    let mut out = Tensor3::zeros(1, ha, wa);
    run_chunked(ha, wa, out.as_mut_slice(), pool_size, |i, j| {
        activation.value(conv_pre_activation(x, filter, stride, padding, i, j))
    })?;
    Ok(ExecutedConv {
        output: out,
        task_count: tasks.len(),
        sim_duration,
    })
}

/// One layer's forward pass on the pool; bit-identical to
/// `nn_core::forward_layer`.
pub fn parallel_forward_layer<T: Scalar>(
    layer: &Layer<T>,
    input: &Tensor3<T>,
    pool_size: usize,
) -> Result<LayerTrace<T>, ParallelError> {
    match layer {
        Layer::Conv {
            filters,
            stride,
            padding,
            activation,
        } => {
            let (_, ha, wa) =
                conv_output_shape(input.shape(), filters[0].weights.shape(), *stride, *padding)?;
            if filters[0].weights.depth() != input.depth() {
                return Err(ParallelError::Nn(NnError::ShapeMismatch {
                    expected: format!("filter depth {}", input.depth()),
                    got: format!("{}", filters[0].weights.depth()),
                }));
            }
            if !input.all_finite() {
                return Err(ParallelError::Nn(NnError::NonFinite("convolution input")));
            }
            let mut net = Tensor3::zeros(filters.len(), ha, wa);
            run_chunked(
                filters.len() * ha,
                wa,
                net.as_mut_slice(),
                pool_size,
                |row, j| {
                    let (f, i) = (row / ha, row % ha);
                    conv_pre_activation(input, &filters[f], *stride, *padding, i, j)
                },
            )?;
            let mut output = net.clone();
            for v in output.as_mut_slice() {
                *v = activation.value(*v);
            }
            Ok(LayerTrace {
                net,
                output,
                pool_argmax: Vec::new(),
            })
        }
        Layer::Pool {
            kind,
            window,
            stride,
        } => {
            let (d, ho, wo) = nn_core::pool_output_shape(input.shape(), *window, *stride)?;
            let mut output = Tensor3::zeros(d, ho, wo);
            run_chunked(d * ho, wo, output.as_mut_slice(), pool_size, |row, j| {
                let (ch, i) = (row / ho, row % ho);
                pool_window_at(input, *kind, *window, *stride, ch, i, j).0
            })?;
            let mut argmax = Vec::new();
            if *kind == nn_core::PoolKind::Max {
                let mut idx = vec![0usize; d * ho * wo];
                run_chunked(d * ho, wo, &mut idx, pool_size, |row, j| {
                    let (ch, i) = (row / ho, row % ho);
                    pool_window_at(input, *kind, *window, *stride, ch, i, j).1
                })?;
                argmax = idx;
            }
            Ok(LayerTrace {
                net: output.clone(),
                output,
                pool_argmax: argmax,
            })
        }
        Layer::Dense {
            weights,
            bias,
            activation,
        } => {
            if weights.cols() != input.len() {
                return Err(ParallelError::Nn(NnError::ShapeMismatch {
                    expected: format!("input of length {}", weights.cols()),
                    got: format!("{}", input.len()),
                }));
            }
            let n = weights.rows();
            let mut net = Tensor3::zeros(1, 1, n);
            let x = input.as_slice();
            run_chunked(n, 1, net.as_mut_slice(), pool_size, |o, _| {
                dense_pre_activation(x, weights, bias, o)
            })?;
            let mut output = net.clone();
            for v in output.as_mut_slice() {
                *v = activation.value(*v);
            }
            Ok(LayerTrace {
                net,
                output,
                pool_argmax: Vec::new(),
            })
        }
    }
}

/// Full forward pass with each layer tiled onto the pool.
pub fn parallel_forward<T: Scalar>(
    network: &Network<T>,
    x: &Tensor3<T>,
    pool_size: usize,
) -> Result<ForwardTrace<T>, ParallelError> {
    let mut layers: Vec<LayerTrace<T>> = Vec::with_capacity(network.layers.len());
    for l in 0..network.layers.len() {
        let trace = {
            let input = if l == 0 { x } else { &layers[l - 1].output };
            parallel_forward_layer(&network.layers[l], input, pool_size)?
        };
        layers.push(trace);
    }
    Ok(ForwardTrace {
        input: x.clone(),
        layers,
    })
}

/// Backward pass with per-element delta tasks tiled onto the pool;
/// bit-identical to `nn_core::backward_pass`.
pub fn parallel_backward<T: Scalar>(
    network: &Network<T>,
    trace: &ForwardTrace<T>,
    labels: &[T],
    pool_size: usize,
) -> Result<Deltas<T>, ParallelError> {
    let n_layers = network.layers.len();
    if trace.layers.len() != n_layers {
        return Err(ParallelError::Nn(NnError::ShapeMismatch {
            expected: format!("trace with {n_layers} layers"),
            got: format!("{}", trace.layers.len()),
        }));
    }
    let last = &trace.layers[n_layers - 1];
    if labels.len() != last.output.len() {
        return Err(ParallelError::Nn(NnError::LengthMismatch {
            expected: last.output.len(),
            got: labels.len(),
        }));
    }

    let mut per_layer: Vec<Tensor3<T>> = vec![Tensor3::zeros(1, 1, 1); n_layers];

    {
        let (d, h, w) = last.net.shape();
        let mut delta = Tensor3::zeros(d, h, w);
        let act = match &network.layers[n_layers - 1] {
            Layer::Conv { activation, .. } | Layer::Dense { activation, .. } => Some(*activation),
            Layer::Pool { .. } => None,
        };
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

    for l in (1..n_layers).rev() {
        let input = trace.layer_input(l);
        let (id, ih, iw) = input.shape();
        let mut upstream = Tensor3::zeros(id, ih, iw);
        {
            let deltas = &per_layer[l];
            match &network.layers[l] {
                Layer::Conv {
                    filters,
                    stride,
                    padding,
                    ..
                } => {
                    run_chunked(id * ih, iw, upstream.as_mut_slice(), pool_size, |row, c| {
                        let (d, r) = (row / ih, row % ih);
                        conv_input_grad_at(deltas, filters, *stride, *padding, d, r, c)
                    })?;
                }
                Layer::Pool {
                    kind,
                    window,
                    stride,
                } => {
                    let argmax = &trace.layers[l].pool_argmax;
                    run_chunked(id * ih, iw, upstream.as_mut_slice(), pool_size, |row, c| {
                        let (d, r) = (row / ih, row % ih);
                        pool_input_grad_at(deltas, argmax, *kind, *window, *stride, input, d, r, c)
                    })?;
                }
                Layer::Dense { weights, .. } => {
                    let dvec = deltas.as_slice();
                    run_chunked(id * ih, iw, upstream.as_mut_slice(), pool_size, |row, c| {
                        dense_input_grad_at(dvec, weights, row * iw + c)
                    })?;
                }
            }
        }
        let prev = &trace.layers[l - 1];
        let act = match &network.layers[l - 1] {
            Layer::Conv { activation, .. } | Layer::Dense { activation, .. } => Some(*activation),
            Layer::Pool { .. } => None,
        };
        if let Some(a) = act {
            for (v, net) in upstream.as_mut_slice().iter_mut().zip(prev.net.as_slice()) {
                *v = *v * a.derivative(*net);
            }
        }
        per_layer[l - 1] = upstream;
    }

    Ok(Deltas { per_layer })
}

/// Forward, backward, gradients, and SGD update for one sample, with the
/// convolution and delta passes tiled onto the pool. Numerically identical
/// to `nn_core::train_one_sample`.
pub fn train_one_sample_parallel<T: Scalar>(
    network: &mut Network<T>,
    input: &Tensor3<T>,
    labels: &[T],
    pool_size: usize,
) -> Result<T, ParallelError> {
    let trace = parallel_forward(network, input, pool_size)?;
    let loss = loss_squared_error(labels, &trace.output_vec()).map_err(ParallelError::Nn)?;
    let deltas = parallel_backward(network, &trace, labels, pool_size)?;
    let grads = nn_core::param_gradients(network, &trace, &deltas)?;
    let params = nn_core::flatten(network);
    let updated = nn_core::sgd_step(&params, &grads, network.learning_rate)?;
    nn_core::apply(&updated, network)?;
    Ok(loss)
}

/// Multiply-accumulate count of one forward+backward pass over a network,
/// used as the deterministic work-unit clock for simulated time.
pub fn sample_work_units<T: Scalar>(
    network: &Network<T>,
    input_shape: (usize, usize, usize),
) -> Result<f64, ParallelError> {
    let shapes = network.validate(input_shape)?;
    let mut total = 0.0f64;
    for (layer, out_shape) in network.layers.iter().zip(&shapes) {
        let out_elems = (out_shape.0 * out_shape.1 * out_shape.2) as f64;
        let cost = match layer {
            Layer::Conv { filters, .. } => {
                let (fd, fh, fw) = filters[0].weights.shape();
                out_elems * (fd * fh * fw) as f64
            }
            Layer::Pool { window, .. } => out_elems * (window * window) as f64,
            Layer::Dense { weights, .. } => (weights.rows() * weights.cols()) as f64,
        };
        // forward plus roughly symmetric backward and gradient work
        total += 3.0 * cost;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn makespan_models() {
        // sequential: sum of costs
        assert_eq!(simulate_makespan(&[1.0, 2.0, 3.0], 1), 6.0);
        // equal costs, as many executors as tasks: one task each
        assert_eq!(simulate_makespan(&[2.0; 9], 9), 2.0);
        // two executors, four unit tasks: two each
        assert_eq!(simulate_makespan(&[1.0; 4], 2), 2.0);
        assert_eq!(simulate_makespan(&[], 4), 0.0);
    }

    #[test]
    fn pool_of_one_equals_sequential_conv() {
        let x = Tensor3::from_rows(&[
            vec![1.0, 2.0, 3.0],
            vec![4.0, 5.0, 6.0],
            vec![7.0, 8.0, 9.0],
        ])
        .unwrap();
        let f = ConvFilter {
            weights: Tensor3::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap(),
            bias: 0.0,
        };
        let seq = nn_core::conv_forward(&x, &f, 1, 0, ActivationKind::Linear).unwrap();
        let par = parallel_conv_execute(&x, &f, 1, 0, ActivationKind::Linear, 1).unwrap();
        assert_eq!(par.output, seq);
        assert_eq!(par.task_count, 4);
    }

    #[test]
    fn equal_cost_full_pool_duration_is_one_task() {
        let x = Tensor3::<f64>::zeros(1, 5, 5);
        let f = ConvFilter {
            weights: Tensor3::<f64>::zeros(1, 3, 3),
            bias: 0.0,
        };
        let costs = vec![7.5; 9];
        let run = parallel_conv_execute_costed(
            &x,
            &f,
            1,
            0,
            ActivationKind::Linear,
            9,
            Some(&costs),
        )
        .unwrap();
        assert_eq!(run.task_count, 9);
        assert_eq!(run.sim_duration, 7.5);
    }

    #[test]
    fn zero_pool_rejected() {
        let x = Tensor3::<f64>::zeros(1, 3, 3);
        let f = ConvFilter {
            weights: Tensor3::<f64>::zeros(1, 2, 2),
            bias: 0.0,
        };
        assert!(parallel_conv_execute(&x, &f, 1, 0, ActivationKind::Linear, 0).is_err());
    }
}
