use crate::error::{Error, Result};
use crate::nn::ModelParams;

/// FedAvg: coordinate-wise mean of client weights with weights `n_k / n`.
///
/// Computed as a running weighted mean in the given (ascending client) order,
/// `W ← W + (n_k / Σ_{j≤k} n_j)(W_k − W)`, which returns a single client's
/// weights, or identical client weights, exactly. Zero-size clients are ignored.
pub fn fedavg_aggregate(client_weights: &[ModelParams], client_sizes: &[usize]) -> Result<ModelParams> {
    if client_weights.len() != client_sizes.len() {
        return Err(Error::Input(format!(
            "{} weight sets but {} sizes",
            client_weights.len(),
            client_sizes.len()
        )));
    }
    let first = client_weights
        .first()
        .ok_or_else(|| Error::Aggregation("no client weights".into()))?;
    if let Some(bad) = client_weights
        .iter()
        .position(|w| !w.same_shape(first) || w.spec() != first.spec())
    {
        return Err(Error::Dimension(format!("client {bad} weights differ in architecture")));
    }
    let mut acc: Option<ModelParams> = None;
    let mut seen = 0usize;
    for (w, &n) in client_weights.iter().zip(client_sizes) {
        if n == 0 {
            continue;
        }
        seen += n;
        match acc.as_mut() {
            None => acc = Some(w.clone()),
            Some(a) => {
                let frac = n as f64 / seen as f64;
                a.for_each_pair_mut(w, |x, y| *x += frac * (y - *x));
            }
        }
    }
    acc.ok_or_else(|| Error::Aggregation("total client size is zero".into()))
}
