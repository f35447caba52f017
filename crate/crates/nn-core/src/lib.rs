//! Deterministic sequential CNN numerics: tensors, layers, the traced
//! forward pass, squared-error loss, backpropagation, parameter handling,
//! SGD, evaluation metrics, and the binary checkpoint format.
//!
//! All math is generic over the scalar type (f32 or f64 via [`Scalar`]);
//! the rest of the workspace uses the f64 aliases exported here.

pub mod activation;
pub mod backprop;
pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod init;
pub mod layer;
pub mod network;
pub mod params;
pub mod scalar;
pub mod tensor;

pub use activation::ActivationKind;
pub use backprop::{backward_pass, param_gradients, train_one_sample, Deltas};
pub use error::{CheckpointError, NnError};
pub use eval::{evaluate, evaluate_with_params, EvalMetrics};
pub use init::initialize_weights;
pub use layer::{
    conv_forward, conv_output_shape, dense_forward, dense_pre_activation, loss_squared_error,
    pool_forward, pool_output_shape, pool_window_at, ConvFilter, Layer, PoolKind,
};
pub use network::{forward_layer, one_hot, ForwardTrace, LayerTrace, Network};
pub use params::{apply, flatten, layout_of, sgd_step, LayerLayout, ParameterSet};
pub use scalar::Scalar;
pub use tensor::{Mat, Tensor3};

/// Concrete f64 aliases used by the distributed runtime and tools.
pub type Tensor3F64 = Tensor3<f64>;
pub type NetworkF64 = Network<f64>;
pub type ParameterSetF64 = ParameterSet<f64>;
pub type DeltasF64 = Deltas<f64>;

/// f32 aliases for callers that trade precision for footprint.
pub type Tensor3F32 = Tensor3<f32>;
pub type NetworkF32 = Network<f32>;
pub type ParameterSetF32 = ParameterSet<f32>;
