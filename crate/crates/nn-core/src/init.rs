//! Seeded weight initialization.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::layer::Layer;
use crate::network::Network;
use crate::scalar::Scalar;

/// Fills all trainable weights uniformly in +/- sqrt(6 / (fan_in + fan_out))
/// from a deterministic generator; biases start at zero. Sampling order is
/// the canonical parameter order, so a seed pins every weight.
pub fn initialize_weights<T: Scalar>(network: &mut Network<T>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &mut network.layers {
        match layer {
            Layer::Conv { filters, .. } => {
                let (d, h, w) = filters[0].weights.shape();
                let fan_in = (d * h * w) as f64;
                let fan_out = (filters.len() * h * w) as f64;
                let limit = (6.0 / (fan_in + fan_out)).sqrt();
                for f in filters.iter_mut() {
                    for v in f.weights.as_mut_slice() {
                        *v = T::from_f64(rng.gen_range(-limit..limit));
                    }
                    f.bias = T::zero();
                }
            }
            Layer::Pool { .. } => {}
            Layer::Dense { weights, bias, .. } => {
                let fan_in = weights.cols() as f64;
                let fan_out = weights.rows() as f64;
                let limit = (6.0 / (fan_in + fan_out)).sqrt();
                for v in weights.as_mut_slice() {
                    *v = T::from_f64(rng.gen_range(-limit..limit));
                }
                for b in bias.iter_mut() {
                    *b = T::zero();
                }
            }
        }
    }
}
