//! Flat, versionable view of all trainable weights — the "weight set".
//!
//! Canonical order: layers in network order; within a conv layer, filter 0
//! weights (depth, row, column row-major) then its bias, filter 1, ...;
//! within a dense layer, the weight matrix row-major then the bias vector.

use crate::error::NnError;
use crate::layer::{ConvFilter, Layer};
use crate::network::Network;
use crate::scalar::Scalar;
use crate::tensor::{Mat, Tensor3};

/// Shape of one layer's slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerLayout {
    Conv {
        filters: usize,
        depth: usize,
        height: usize,
        width: usize,
    },
    Pool,
    Dense {
        fan_out: usize,
        fan_in: usize,
    },
}

impl LayerLayout {
    pub fn param_count(&self) -> usize {
        match *self {
            LayerLayout::Conv {
                filters,
                depth,
                height,
                width,
            } => filters * (depth * height * width + 1),
            LayerLayout::Pool => 0,
            LayerLayout::Dense { fan_out, fan_in } => fan_out * (fan_in + 1),
        }
    }
}

/// Flat vector of all trainable weights plus the layout mapping slices back
/// to layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<T> {
    values: Vec<T>,
    layout: Vec<LayerLayout>,
}

impl<T: Scalar> ParameterSet<T> {
    pub fn new(values: Vec<T>, layout: Vec<LayerLayout>) -> Result<Self, NnError> {
        let expected: usize = layout.iter().map(LayerLayout::param_count).sum();
        if values.len() != expected {
            return Err(NnError::LengthMismatch {
                expected,
                got: values.len(),
            });
        }
        Ok(Self { values, layout })
    }

    pub fn zeros(layout: Vec<LayerLayout>) -> Self {
        let n: usize = layout.iter().map(LayerLayout::param_count).sum();
        Self {
            values: vec![T::zero(); n],
            layout,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn layout(&self) -> &[LayerLayout] {
        &self.layout
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Euclidean norm of the difference against another set of equal layout.
    pub fn delta_norm(&self, other: &Self) -> Result<f64, NnError> {
        if self.layout != other.layout {
            return Err(NnError::LayoutMismatch);
        }
        let mut acc = 0.0;
        for (a, b) in self.values.iter().zip(&other.values) {
            let d = (*a - *b).as_f64();
            acc += d * d;
        }
        Ok(acc.sqrt())
    }
}

/// Layout of a network's trainable parameters, in canonical layer order.
pub fn layout_of<T: Scalar>(network: &Network<T>) -> Vec<LayerLayout> {
    network
        .layers
        .iter()
        .map(|layer| match layer {
            Layer::Conv { filters, .. } => {
                let (d, h, w) = filters[0].weights.shape();
                LayerLayout::Conv {
                    filters: filters.len(),
                    depth: d,
                    height: h,
                    width: w,
                }
            }
            Layer::Pool { .. } => LayerLayout::Pool,
            Layer::Dense { weights, .. } => LayerLayout::Dense {
                fan_out: weights.rows(),
                fan_in: weights.cols(),
            },
        })
        .collect()
}

/// Flattens all trainable weights into a ParameterSet.
pub fn flatten<T: Scalar>(network: &Network<T>) -> ParameterSet<T> {
    let layout = layout_of(network);
    let mut values = Vec::new();
    for layer in &network.layers {
        match layer {
            Layer::Conv { filters, .. } => {
                for f in filters {
                    values.extend_from_slice(f.weights.as_slice());
                    values.push(f.bias);
                }
            }
            Layer::Pool { .. } => {}
            Layer::Dense { weights, bias, .. } => {
                values.extend_from_slice(weights.as_slice());
                values.extend_from_slice(bias);
            }
        }
    }
    ParameterSet { values, layout }
}

/// Writes a flat parameter vector back into a network of matching layout.
pub fn apply<T: Scalar>(params: &ParameterSet<T>, network: &mut Network<T>) -> Result<(), NnError> {
    if params.layout != layout_of(network) {
        return Err(NnError::LayoutMismatch);
    }
    let mut cursor = 0usize;
    for layer in &mut network.layers {
        match layer {
            Layer::Conv { filters, .. } => {
                for f in filters.iter_mut() {
                    let n = f.weights.len();
                    f.weights
                        .as_mut_slice()
                        .copy_from_slice(&params.values[cursor..cursor + n]);
                    cursor += n;
                    f.bias = params.values[cursor];
                    cursor += 1;
                }
            }
            Layer::Pool { .. } => {}
            Layer::Dense { weights, bias, .. } => {
                let n = weights.rows() * weights.cols();
                weights
                    .as_mut_slice()
                    .copy_from_slice(&params.values[cursor..cursor + n]);
                cursor += n;
                let b = bias.len();
                bias.copy_from_slice(&params.values[cursor..cursor + b]);
                cursor += b;
            }
        }
    }
    debug_assert_eq!(cursor, params.values.len());
    Ok(())
}

/// w <- w - eta * g, element-wise. eta = 0 and g = 0 are both identities.
pub fn sgd_step<T: Scalar>(
    params: &ParameterSet<T>,
    grads: &ParameterSet<T>,
    eta: T,
) -> Result<ParameterSet<T>, NnError> {
    if params.layout != grads.layout {
        return Err(NnError::LayoutMismatch);
    }
    if params.values.len() != grads.values.len() {
        return Err(NnError::LengthMismatch {
            expected: params.values.len(),
            got: grads.values.len(),
        });
    }
    let values = params
        .values
        .iter()
        .zip(&grads.values)
        .map(|(w, g)| *w - eta * *g)
        .collect();
    Ok(ParameterSet {
        values,
        layout: params.layout.clone(),
    })
}

/// Builds a network skeleton matching a layout, with zeroed parameters.
/// Hyperparameters (stride, activation, pool kind) are not part of the
/// layout and must come from an existing network when exact reconstruction
/// is needed; this helper serves checkpoint inspection.
pub fn network_skeleton(layout: &[LayerLayout]) -> Network<f64> {
    use crate::activation::ActivationKind;
    use crate::layer::PoolKind;
    let layers = layout
        .iter()
        .map(|l| match *l {
            LayerLayout::Conv {
                filters,
                depth,
                height,
                width,
            } => Layer::Conv {
                filters: (0..filters)
                    .map(|_| ConvFilter {
                        weights: Tensor3::zeros(depth, height, width),
                        bias: 0.0,
                    })
                    .collect(),
                stride: 1,
                padding: 0,
                activation: ActivationKind::Linear,
            },
            LayerLayout::Pool => Layer::Pool {
                kind: PoolKind::Max,
                window: 1,
                stride: 1,
            },
            LayerLayout::Dense { fan_out, fan_in } => Layer::Dense {
                weights: Mat::zeros(fan_out, fan_in),
                bias: vec![0.0; fan_out],
                activation: ActivationKind::Linear,
            },
        })
        .collect();
    Network::new(layers, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::ActivationKind;
    use crate::layer::PoolKind;

    fn sample_network() -> Network<f64> {
        Network::new(
            vec![
                Layer::Conv {
                    filters: vec![
                        ConvFilter {
                            weights: Tensor3::from_vec(1, 2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
                            bias: 0.5,
                        },
                        ConvFilter {
                            weights: Tensor3::from_vec(1, 2, 2, vec![-0.1, -0.2, -0.3, -0.4])
                                .unwrap(),
                            bias: -0.5,
                        },
                    ],
                    stride: 1,
                    padding: 0,
                    activation: ActivationKind::Tanh,
                },
                Layer::Pool {
                    kind: PoolKind::Max,
                    window: 2,
                    stride: 2,
                },
                Layer::Dense {
                    weights: Mat::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
                    bias: vec![0.0, 1.0],
                    activation: ActivationKind::Sigmoid,
                },
            ],
            0.05,
        )
    }

    #[test]
    fn flatten_apply_roundtrip() {
        let net = sample_network();
        let params = flatten(&net);
        assert_eq!(params.len(), 2 * 5 + 2 * 3);
        let mut other = sample_network();
        for layer in &mut other.layers {
            if let Layer::Dense { weights, .. } = layer {
                weights.set(0, 0, 99.0);
            }
        }
        apply(&params, &mut other).unwrap();
        assert_eq!(other, net);
    }

    #[test]
    fn sgd_identities() {
        let net = sample_network();
        let params = flatten(&net);
        let zero_grads = ParameterSet::zeros(params.layout().to_vec());
        assert_eq!(sgd_step(&params, &zero_grads, 0.3).unwrap(), params);
        let grads = flatten(&net);
        assert_eq!(sgd_step(&params, &grads, 0.0).unwrap(), params);
    }

    #[test]
    fn sgd_hand_example() {
        let layout = vec![LayerLayout::Dense {
            fan_out: 1,
            fan_in: 0,
        }];
        let w = ParameterSet::new(vec![1.0], layout.clone()).unwrap();
        let g = ParameterSet::new(vec![0.5], layout).unwrap();
        let next = sgd_step(&w, &g, 0.1).unwrap();
        assert_eq!(next.values(), &[0.95]);
    }

    #[test]
    fn mismatched_layouts_rejected() {
        let a = ParameterSet::<f64>::zeros(vec![LayerLayout::Pool]);
        let b = ParameterSet::<f64>::zeros(vec![LayerLayout::Dense {
            fan_out: 1,
            fan_in: 1,
        }]);
        assert!(sgd_step(&a, &b, 0.1).is_err());
    }
}
