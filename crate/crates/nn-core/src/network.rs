//! Network definition, shape validation, and the traced forward pass.

use crate::activation::ActivationKind;
use crate::error::NnError;
use crate::layer::{
    conv_forward_traced, conv_output_shape, dense_forward, pool_forward, pool_output_shape, Layer,
};
use crate::scalar::Scalar;
use crate::tensor::Tensor3;

/// Ordered layers plus the learning rate; loss is squared error.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub layers: Vec<Layer<T>>,
    pub learning_rate: T,
}

/// Per-layer weighted inputs and outputs retained for backpropagation.
/// Dense vectors are stored as (1, 1, n) tensors. Pooling layers have no
/// activation, so their net equals their output.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace<T> {
    pub net: Tensor3<T>,
    pub output: Tensor3<T>,
    /// Flat input index of each window maximum (max pooling only).
    pub pool_argmax: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T> {
    pub input: Tensor3<T>,
    pub layers: Vec<LayerTrace<T>>,
}

impl<T: Scalar> ForwardTrace<T> {
    /// Network output as a flat vector (row-major over the last layer).
    pub fn output_vec(&self) -> Vec<T> {
        self.layers
            .last()
            .map(|l| l.output.as_slice().to_vec())
            .unwrap_or_default()
    }

    /// Input tensor feeding layer `l`.
    pub fn layer_input(&self, l: usize) -> &Tensor3<T> {
        if l == 0 {
            &self.input
        } else {
            &self.layers[l - 1].output
        }
    }
}

impl<T: Scalar> Network<T> {
    pub fn new(layers: Vec<Layer<T>>, learning_rate: T) -> Self {
        Self {
            layers,
            learning_rate,
        }
    }

    /// Activation derivative factor for a layer; pooling layers contribute 1.
    pub(crate) fn activation_of(layer: &Layer<T>) -> Option<ActivationKind> {
        match layer {
            Layer::Conv { activation, .. } | Layer::Dense { activation, .. } => Some(*activation),
            Layer::Pool { .. } => None,
        }
    }

    /// Checks the whole topology against an input shape and returns each
    /// layer's output shape.
    pub fn validate(&self, input_shape: (usize, usize, usize)) -> Result<Vec<(usize, usize, usize)>, NnError> {
        if self.layers.is_empty() {
            return Err(NnError::InvalidGeometry("network has no layers".into()));
        }
        if !(self.learning_rate > T::zero()) {
            return Err(NnError::InvalidGeometry(
                "learning rate must be positive".into(),
            ));
        }
        let mut shape = input_shape;
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            shape = match layer {
                Layer::Conv {
                    filters,
                    stride,
                    padding,
                    ..
                } => {
                    if filters.is_empty() {
                        return Err(NnError::InvalidGeometry(format!(
                            "layer {l}: conv layer has no filters"
                        )));
                    }
                    let fshape = filters[0].weights.shape();
                    for (fi, f) in filters.iter().enumerate() {
                        if f.weights.shape() != fshape {
                            return Err(NnError::InvalidGeometry(format!(
                                "layer {l}: filter {fi} shape differs from filter 0"
                            )));
                        }
                        if !f.weights.all_finite() || !f.bias.is_finite() {
                            return Err(NnError::NonFinite("filter weights"));
                        }
                    }
                    if fshape.0 != shape.0 {
                        return Err(NnError::ShapeMismatch {
                            expected: format!("layer {l}: filter depth {}", shape.0),
                            got: format!("{}", fshape.0),
                        });
                    }
                    let (_, ha, wa) = conv_output_shape(shape, fshape, *stride, *padding)?;
                    (filters.len(), ha, wa)
                }
                Layer::Pool { window, stride, .. } => pool_output_shape(shape, *window, *stride)?,
                Layer::Dense { weights, bias, .. } => {
                    let fan_in = shape.0 * shape.1 * shape.2;
                    if weights.cols() != fan_in {
                        return Err(NnError::ShapeMismatch {
                            expected: format!("layer {l}: dense fan-in {fan_in}"),
                            got: format!("{}", weights.cols()),
                        });
                    }
                    if bias.len() != weights.rows() {
                        return Err(NnError::LengthMismatch {
                            expected: weights.rows(),
                            got: bias.len(),
                        });
                    }
                    (1, 1, weights.rows())
                }
            };
            shapes.push(shape);
        }
        Ok(shapes)
    }

    /// Forward pass retaining per-layer nets and outputs.
    pub fn forward(&self, x: &Tensor3<T>) -> Result<ForwardTrace<T>, NnError> {
        let mut traces: Vec<LayerTrace<T>> = Vec::with_capacity(self.layers.len());
        for l in 0..self.layers.len() {
            let trace = {
                let input = if l == 0 {
                    x
                } else {
                    &traces[l - 1].output
                };
                forward_layer(&self.layers[l], input)?
            };
            traces.push(trace);
        }
        Ok(ForwardTrace {
            input: x.clone(),
            layers: traces,
        })
    }

    /// Number of output neurons (flattened last-layer size) for an input shape.
    pub fn output_len(&self, input_shape: (usize, usize, usize)) -> Result<usize, NnError> {
        let shapes = self.validate(input_shape)?;
        let (d, h, w) = *shapes.last().unwrap();
        Ok(d * h * w)
    }
}

/// Runs one layer on an input tensor, producing its trace.
pub fn forward_layer<T: Scalar>(layer: &Layer<T>, input: &Tensor3<T>) -> Result<LayerTrace<T>, NnError> {
    match layer {
        Layer::Conv {
            filters,
            stride,
            padding,
            activation,
        } => {
            let (_, ha, wa) = conv_output_shape(
                input.shape(),
                filters[0].weights.shape(),
                *stride,
                *padding,
            )?;
            let mut net = Tensor3::zeros(filters.len(), ha, wa);
            let mut out = Tensor3::zeros(filters.len(), ha, wa);
            for (fi, filter) in filters.iter().enumerate() {
                let (fnet, fout) = conv_forward_traced(input, filter, *stride, *padding, *activation)?;
                for i in 0..ha {
                    for j in 0..wa {
                        net.set(fi, i, j, fnet.get(0, i, j));
                        out.set(fi, i, j, fout.get(0, i, j));
                    }
                }
            }
            Ok(LayerTrace {
                net,
                output: out,
                pool_argmax: Vec::new(),
            })
        }
        Layer::Pool {
            kind,
            window,
            stride,
        } => {
            let pooled = pool_forward(input, *kind, *window, *stride)?;
            Ok(LayerTrace {
                net: pooled.output.clone(),
                output: pooled.output,
                pool_argmax: pooled.argmax,
            })
        }
        Layer::Dense {
            weights,
            bias,
            activation,
        } => {
            let (net, out) = dense_forward(input.as_slice(), weights, bias, *activation)?;
            let n = net.len();
            Ok(LayerTrace {
                net: Tensor3::from_vec(1, 1, n, net)?,
                output: Tensor3::from_vec(1, 1, n, out)?,
                pool_argmax: Vec::new(),
            })
        }
    }
}

/// One-hot target vector for squared-error training.
pub fn one_hot<T: Scalar>(label: usize, classes: usize) -> Vec<T> {
    let mut v = vec![T::zero(); classes];
    if label < classes {
        v[label] = T::one();
    }
    v
}
