use rand::Rng;

use super::model::{ArchitectureSpec, ModelParams};
use crate::error::Result;
use crate::rng;

/// Xavier/Glorot uniform initialization: weights in `±sqrt(6 / (fan_in + fan_out))`,
/// biases zero. The same `(spec, seed)` always yields the same parameters.
pub fn xavier_init(spec: &ArchitectureSpec, seed: u64) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(spec)?;
    let mut rng = rng::stream(&[rng::tag::INIT, seed]);
    for layer in params.layers_mut() {
        let (fan_in, fan_out) = layer.weight.shape();
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for w in layer.weight.values_mut() {
            *w = rng.random_range(-bound..bound);
        }
    }
    Ok(params)
}
