//! Layer definitions, convolution shape algebra, and the per-element kernels.
//!
//! Every output element is produced by one kernel call with a fixed summation
//! order (depth, then filter row, then filter column), so sequential and
//! tiled executions of the same layer are bit-identical.

use crate::activation::ActivationKind;
use crate::error::NnError;
use crate::scalar::Scalar;
use crate::tensor::{Mat, Tensor3};

/// One convolution filter: a rank-3 weight block plus a scalar bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvFilter<T> {
    pub weights: Tensor3<T>,
    pub bias: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Mean,
}

/// A single layer of the network.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv {
        filters: Vec<ConvFilter<T>>,
        stride: usize,
        padding: usize,
        activation: ActivationKind,
    },
    Pool {
        kind: PoolKind,
        window: usize,
        stride: usize,
    },
    /// Fully-connected layer over the flattened previous output.
    Dense {
        weights: Mat<T>,
        bias: Vec<T>,
        activation: ActivationKind,
    },
}

/// Output shape of a convolution with one filter: (1, H_a, W_a) where
/// H_a = (H - H_f + 2P)/S + 1 and W_a likewise. Each filter yields one
/// output channel; a layer's output depth equals its filter count.
pub fn conv_output_shape(
    input: (usize, usize, usize),
    filter: (usize, usize, usize),
    stride: usize,
    padding: usize,
) -> Result<(usize, usize, usize), NnError> {
    let (_, h, w) = input;
    let (_, fh, fw) = filter;
    if stride == 0 {
        return Err(NnError::InvalidGeometry("stride must be >= 1".into()));
    }
    if fh == 0 || fw == 0 {
        return Err(NnError::InvalidGeometry("filter must be non-empty".into()));
    }
    let padded_h = h + 2 * padding;
    let padded_w = w + 2 * padding;
    if fh > padded_h || fw > padded_w {
        return Err(NnError::InvalidGeometry(format!(
            "filter {fh}x{fw} larger than padded input {padded_h}x{padded_w}"
        )));
    }
    // Exact-fit geometry only: a remainder would silently drop input.
    if (padded_h - fh) % stride != 0 || (padded_w - fw) % stride != 0 {
        return Err(NnError::InvalidGeometry(format!(
            "window span ({}, {}) not divisible by stride {stride}",
            padded_h - fh,
            padded_w - fw
        )));
    }
    Ok((1, (padded_h - fh) / stride + 1, (padded_w - fw) / stride + 1))
}

/// Output shape of a pooling layer; depth is preserved.
pub fn pool_output_shape(
    input: (usize, usize, usize),
    window: usize,
    stride: usize,
) -> Result<(usize, usize, usize), NnError> {
    let (d, h, w) = input;
    if stride == 0 || window == 0 {
        return Err(NnError::InvalidGeometry(
            "pool window and stride must be >= 1".into(),
        ));
    }
    if window > h || window > w {
        return Err(NnError::InvalidGeometry(format!(
            "pool window {window} exceeds input {h}x{w}"
        )));
    }
    if (h - window) % stride != 0 || (w - window) % stride != 0 {
        return Err(NnError::InvalidGeometry(format!(
            "pool span ({}, {}) not divisible by stride {stride}",
            h - window,
            w - window
        )));
    }
    Ok((d, (h - window) / stride + 1, (w - window) / stride + 1))
}

/// Weighted input of one output element (i, j): the full (d, m, n) sum plus
/// bias, before activation. Reads the input through its zero padding.
#[inline]
pub fn conv_pre_activation<T: Scalar>(
    x: &Tensor3<T>,
    filter: &ConvFilter<T>,
    stride: usize,
    padding: usize,
    i: usize,
    j: usize,
) -> T {
    let (fd, fh, fw) = filter.weights.shape();
    let mut acc = T::zero();
    for d in 0..fd {
        for m in 0..fh {
            for n in 0..fw {
                acc += filter.weights.get(d, m, n) * x.get_padded(d, i * stride + m, j * stride + n, padding);
            }
        }
    }
    acc + filter.bias
}

/// Convolution of an input with a single filter, producing a (1, H_a, W_a)
/// feature map through the given activation.
pub fn conv_forward<T: Scalar>(
    x: &Tensor3<T>,
    filter: &ConvFilter<T>,
    stride: usize,
    padding: usize,
    activation: ActivationKind,
) -> Result<Tensor3<T>, NnError> {
    let (net, out) = conv_forward_traced(x, filter, stride, padding, activation)?;
    drop(net);
    Ok(out)
}

/// Same as [`conv_forward`], also returning the pre-activation map.
pub fn conv_forward_traced<T: Scalar>(
    x: &Tensor3<T>,
    filter: &ConvFilter<T>,
    stride: usize,
    padding: usize,
    activation: ActivationKind,
) -> Result<(Tensor3<T>, Tensor3<T>), NnError> {
    if filter.weights.depth() != x.depth() {
        return Err(NnError::ShapeMismatch {
            expected: format!("filter depth {}", x.depth()),
            got: format!("{}", filter.weights.depth()),
        });
    }
    if !x.all_finite() {
        return Err(NnError::NonFinite("convolution input"));
    }
    let (_, ha, wa) = conv_output_shape(x.shape(), filter.weights.shape(), stride, padding)?;
    let mut net = Tensor3::zeros(1, ha, wa);
    let mut out = Tensor3::zeros(1, ha, wa);
    for i in 0..ha {
        for j in 0..wa {
            let pre = conv_pre_activation(x, filter, stride, padding, i, j);
            net.set(0, i, j, pre);
            out.set(0, i, j, activation.value(pre));
        }
    }
    Ok((net, out))
}

/// Result of pooling: the output map plus, for max pooling, the flat input
/// index of each window's (row-major first) maximum for delta routing.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolOutput<T> {
    pub output: Tensor3<T>,
    pub argmax: Vec<usize>,
}

/// One pooling window at output position (d, i, j): (value, flat argmax
/// index into the input). Ties go to the first maximal element in row-major
/// order; mean pooling reports the window origin as a placeholder index.
#[inline]
pub fn pool_window_at<T: Scalar>(
    a: &Tensor3<T>,
    kind: PoolKind,
    window: usize,
    stride: usize,
    d: usize,
    i: usize,
    j: usize,
) -> (T, usize) {
    match kind {
        PoolKind::Max => {
            let mut best = a.get(d, i * stride, j * stride);
            let mut best_idx = a.flat_index(d, i * stride, j * stride);
            for m in 0..window {
                for n in 0..window {
                    let v = a.get(d, i * stride + m, j * stride + n);
                    if v > best {
                        best = v;
                        best_idx = a.flat_index(d, i * stride + m, j * stride + n);
                    }
                }
            }
            (best, best_idx)
        }
        PoolKind::Mean => {
            let mut acc = T::zero();
            for m in 0..window {
                for n in 0..window {
                    acc += a.get(d, i * stride + m, j * stride + n);
                }
            }
            (
                acc / T::from_f64((window * window) as f64),
                a.flat_index(d, i * stride, j * stride),
            )
        }
    }
}

/// Window max or mean per channel. Max pooling records argmax indices.
pub fn pool_forward<T: Scalar>(
    a: &Tensor3<T>,
    kind: PoolKind,
    window: usize,
    stride: usize,
) -> Result<PoolOutput<T>, NnError> {
    let (d, ho, wo) = pool_output_shape(a.shape(), window, stride)?;
    let mut output = Tensor3::zeros(d, ho, wo);
    let mut argmax = Vec::new();
    if kind == PoolKind::Max {
        argmax.reserve(d * ho * wo);
    }
    for ch in 0..d {
        for i in 0..ho {
            for j in 0..wo {
                let (v, idx) = pool_window_at(a, kind, window, stride, ch, i, j);
                output.set(ch, i, j, v);
                if kind == PoolKind::Max {
                    argmax.push(idx);
                }
            }
        }
    }
    Ok(PoolOutput { output, argmax })
}

/// Weighted input of dense neuron `o`.
#[inline]
pub fn dense_pre_activation<T: Scalar>(x: &[T], weights: &Mat<T>, bias: &[T], o: usize) -> T {
    let mut acc = T::zero();
    for i in 0..weights.cols() {
        acc += weights.get(o, i) * x[i];
    }
    acc + bias[o]
}

/// y = f(Wx + b); returns (net, output).
pub fn dense_forward<T: Scalar>(
    x: &[T],
    weights: &Mat<T>,
    bias: &[T],
    activation: ActivationKind,
) -> Result<(Vec<T>, Vec<T>), NnError> {
    if weights.cols() != x.len() {
        return Err(NnError::ShapeMismatch {
            expected: format!("input of length {}", weights.cols()),
            got: format!("{}", x.len()),
        });
    }
    if weights.rows() != bias.len() {
        return Err(NnError::LengthMismatch {
            expected: weights.rows(),
            got: bias.len(),
        });
    }
    let mut net = Vec::with_capacity(weights.rows());
    let mut out = Vec::with_capacity(weights.rows());
    for o in 0..weights.rows() {
        let pre = dense_pre_activation(x, weights, bias, o);
        net.push(pre);
        out.push(activation.value(pre));
    }
    Ok((net, out))
}

/// E = sum_i (label_i - output_i)^2. Kept without the 1/2 factor; the
/// resulting factor 2 appears in the output-layer deltas.
pub fn loss_squared_error<T: Scalar>(labels: &[T], outputs: &[T]) -> Result<T, NnError> {
    if labels.len() != outputs.len() {
        return Err(NnError::LengthMismatch {
            expected: labels.len(),
            got: outputs.len(),
        });
    }
    let mut acc = T::zero();
    for (y_true, y) in labels.iter().zip(outputs) {
        let d = *y_true - *y;
        acc += d * d;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filter_of(rows: &[Vec<f64>], bias: f64) -> ConvFilter<f64> {
        ConvFilter {
            weights: Tensor3::from_rows(rows).unwrap(),
            bias,
        }
    }

    #[test]
    fn output_shape_examples() {
        assert_eq!(
            conv_output_shape((1, 5, 5), (1, 3, 3), 1, 0).unwrap(),
            (1, 3, 3)
        );
        assert_eq!(
            conv_output_shape((1, 28, 28), (1, 5, 5), 1, 2).unwrap(),
            (1, 28, 28)
        );
        // 1x1 filter keeps the spatial extent
        assert_eq!(
            conv_output_shape((3, 7, 9), (3, 1, 1), 1, 0).unwrap(),
            (1, 7, 9)
        );
    }

    #[test]
    fn output_shape_rejects_bad_geometry() {
        assert!(conv_output_shape((1, 5, 5), (1, 3, 3), 0, 0).is_err());
        assert!(conv_output_shape((1, 2, 2), (1, 3, 3), 1, 0).is_err());
        // (5 - 2) not divisible by stride 2
        assert!(conv_output_shape((1, 5, 5), (1, 2, 2), 2, 0).is_err());
    }

    #[test]
    fn conv_identity_filter() {
        let x = Tensor3::from_vec(1, 1, 1, vec![5.0]).unwrap();
        let f = filter_of(&[vec![1.0]], 0.0);
        let out = conv_forward(&x, &f, 1, 0, ActivationKind::Linear).unwrap();
        assert_eq!(out.as_slice(), &[5.0]);
    }

    #[test]
    fn conv_hand_summation() {
        let x = Tensor3::from_rows(&[
            vec![1.0, 2.0, 3.0],
            vec![4.0, 5.0, 6.0],
            vec![7.0, 8.0, 9.0],
        ])
        .unwrap();
        let f = filter_of(&[vec![1.0, 1.0], vec![1.0, 1.0]], 0.0);
        let out = conv_forward(&x, &f, 1, 0, ActivationKind::Linear).unwrap();
        assert_eq!(out.as_slice(), &[12.0, 16.0, 24.0, 28.0]);
    }

    #[test]
    fn conv_zero_filter_annihilates() {
        let x = Tensor3::from_rows(&[vec![3.0, -1.0], vec![0.5, 9.0]]).unwrap();
        let f = filter_of(&[vec![0.0, 0.0], vec![0.0, 0.0]], 0.0);
        let out = conv_forward(&x, &f, 1, 0, ActivationKind::Linear).unwrap();
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_rejects_non_finite_and_depth_mismatch() {
        let x = Tensor3::from_vec(1, 1, 1, vec![f64::NAN]).unwrap();
        let f = filter_of(&[vec![1.0]], 0.0);
        assert!(conv_forward(&x, &f, 1, 0, ActivationKind::Linear).is_err());

        let x = Tensor3::zeros(2, 3, 3);
        assert!(conv_forward(&x, &f, 1, 0, ActivationKind::Linear).is_err());
    }

    #[test]
    fn pool_examples() {
        let a = Tensor3::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let max = pool_forward(&a, PoolKind::Max, 2, 2).unwrap();
        assert_eq!(max.output.as_slice(), &[4.0]);
        assert_eq!(max.argmax, vec![3]);
        let mean = pool_forward(&a, PoolKind::Mean, 2, 2).unwrap();
        assert_eq!(mean.output.as_slice(), &[2.5]);
        // identity pool
        let id = pool_forward(&a, PoolKind::Max, 1, 1).unwrap();
        assert_eq!(id.output, a);
    }

    #[test]
    fn pool_rejects_oversized_window() {
        let a = Tensor3::<f64>::zeros(1, 2, 2);
        assert!(pool_forward(&a, PoolKind::Max, 3, 1).is_err());
    }

    #[test]
    fn max_pool_tie_breaks_row_major() {
        let a = Tensor3::from_rows(&[vec![7.0, 7.0], vec![7.0, 7.0]]).unwrap();
        let out = pool_forward(&a, PoolKind::Max, 2, 2).unwrap();
        assert_eq!(out.argmax, vec![0]);
    }

    #[test]
    fn dense_examples() {
        let w = Mat::from_vec(1, 2, vec![1.0, 1.0]).unwrap();
        let (_, y) = dense_forward(&[2.0, 3.0], &w, &[1.0], ActivationKind::Linear).unwrap();
        assert_eq!(y, vec![6.0]);

        let id = Mat::identity(3);
        let x = [0.25, -1.0, 2.0];
        let (_, y) = dense_forward(&x, &id, &[0.0; 3], ActivationKind::Linear).unwrap();
        assert_eq!(y, x.to_vec());

        // zero map: f(0) everywhere
        let w = Mat::zeros(2, 3);
        let (_, y) = dense_forward(&[1.0, 2.0, 3.0], &w, &[0.0; 2], ActivationKind::Sigmoid).unwrap();
        assert_eq!(y, vec![0.5, 0.5]);

        assert!(dense_forward(&[1.0], &Mat::<f64>::zeros(2, 3), &[0.0; 2], ActivationKind::Linear).is_err());
    }

    #[test]
    fn squared_error_examples() {
        assert_eq!(loss_squared_error(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(loss_squared_error(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), 0.5);
        assert_eq!(loss_squared_error(&[1.0], &[0.0]).unwrap(), 1.0);
        assert!(loss_squared_error(&[1.0], &[0.0, 0.0]).is_err());
    }
}
