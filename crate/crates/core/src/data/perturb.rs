use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::TrajectoryGraph;
use crate::rng::StreamRng;

/// Adds i.i.d. `Normal(0, noise_sd^2)` noise to every coordinate.
/// A zero standard deviation returns the input unchanged without drawing.
pub fn perturb_features(x: &[f64], noise_sd: f64, rng: &mut StreamRng) -> Vec<f64> {
    if noise_sd == 0.0 {
        return x.to_vec();
    }
    x.iter()
        .map(|v| v + noise_sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Toggles each unordered node pair's edge membership independently with
/// probability `flip_prob`. Nodes and features are unchanged.
pub fn perturb_graph(g: &TrajectoryGraph, flip_prob: f64, rng: &mut StreamRng) -> Result<TrajectoryGraph> {
    if !(0.0..=1.0).contains(&flip_prob) {
        return Err(Error::Input(format!("flip probability {flip_prob} outside [0, 1]")));
    }
    if flip_prob == 0.0 {
        return Ok(g.clone());
    }
    let n = g.num_nodes();
    let mut edges = BTreeSet::new();
    for i in 0..n {
        for j in i + 1..n {
            let present = g.has_edge(i, j);
            if present != rng.random_bool(flip_prob) {
                edges.insert((i, j));
            }
        }
    }
    Ok(g.with_edges(edges))
}
