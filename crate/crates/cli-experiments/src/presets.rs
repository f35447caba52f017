//! Network scale presets (case1..case7) with a down-scaling factor so the
//! larger cases stay runnable on one machine.

use nn_core::{ActivationKind, ConvFilter, Layer, Mat, Network, NetworkF64, PoolKind, Tensor3};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PresetSpec {
    pub conv_layers: usize,
    pub conv_filters: usize,
    pub fc_layers: usize,
    pub fc_neurons: usize,
}

/// The seven experiment scales: (conv layers, filters per conv layer,
/// fully-connected layers, neurons per fully-connected layer).
pub fn preset(name: &str) -> Result<PresetSpec, CliError> {
    let spec = match name {
        "case1" => PresetSpec {
            conv_layers: 2,
            conv_filters: 4,
            fc_layers: 3,
            fc_neurons: 500,
        },
        "case2" => PresetSpec {
            conv_layers: 4,
            conv_filters: 4,
            fc_layers: 3,
            fc_neurons: 1000,
        },
        "case3" => PresetSpec {
            conv_layers: 6,
            conv_filters: 8,
            fc_layers: 5,
            fc_neurons: 1500,
        },
        "case4" => PresetSpec {
            conv_layers: 8,
            conv_filters: 8,
            fc_layers: 5,
            fc_neurons: 1500,
        },
        "case5" => PresetSpec {
            conv_layers: 8,
            conv_filters: 10,
            fc_layers: 7,
            fc_neurons: 2000,
        },
        "case6" => PresetSpec {
            conv_layers: 10,
            conv_filters: 10,
            fc_layers: 7,
            fc_neurons: 2000,
        },
        "case7" => PresetSpec {
            conv_layers: 10,
            conv_filters: 12,
            fc_layers: 7,
            fc_neurons: 2000,
        },
    _ => return Err(CliError::UnknownPreset(name.to_string())),
    };
    Ok(spec)
}

pub fn preset_names() -> [&'static str; 7] {
    ["case1", "case2", "case3", "case4", "case5", "case6", "case7"]
}

/// Builds the preset network for an input shape: shape-preserving 3x3
/// convolutions (stride 1, padding 1, tanh) with 2x2 max pooling after every
/// second convolution while the maps stay large enough, then the
/// fully-connected stack (tanh) and a sigmoid output layer of `classes`
/// neurons. `scale` multiplies filter and neuron counts (minimum 1).
pub fn build_network(
    spec: &PresetSpec,
    input: (usize, usize, usize),
    classes: usize,
    scale: f64,
    learning_rate: f64,
    seed: u64,
) -> Result<NetworkF64, CliError> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(CliError::Validation(format!(
            "scale must be positive, got {scale}"
        )));
    }
    let filters = ((spec.conv_filters as f64 * scale).round() as usize).max(1);
    let neurons = ((spec.fc_neurons as f64 * scale).round() as usize).max(classes.max(1));

    let mut layers = Vec::new();
    let (mut depth, mut h, mut w) = input;
    for conv_idx in 0..spec.conv_layers {
        layers.push(Layer::Conv {
            filters: (0..filters)
                .map(|_| ConvFilter {
                    weights: Tensor3::zeros(depth, 3, 3),
                    bias: 0.0,
                })
                .collect(),
            stride: 1,
            padding: 1,
            activation: ActivationKind::Tanh,
        });
        depth = filters;
        if conv_idx % 2 == 1 && h % 2 == 0 && w % 2 == 0 && h >= 8 {
            layers.push(Layer::Pool {
                kind: PoolKind::Max,
                window: 2,
                stride: 2,
            });
            h /= 2;
            w /= 2;
        }
    }
    let mut fan_in = depth * h * w;
    for _ in 0..spec.fc_layers.saturating_sub(1) {
        layers.push(Layer::Dense {
            weights: Mat::zeros(neurons, fan_in),
            bias: vec![0.0; neurons],
            activation: ActivationKind::Tanh,
        });
        fan_in = neurons;
    }
    layers.push(Layer::Dense {
        weights: Mat::zeros(classes, fan_in),
        bias: vec![0.0; classes],
        activation: ActivationKind::Sigmoid,
    });

    let mut network = Network::new(layers, learning_rate);
    nn_core::initialize_weights(&mut network, seed);
    network.validate(input)?;
    Ok(network)
}
