//! Deterministic simulator for incremental semi-supervised federated learning.
//!
//! A global *expert* is trained with federated averaging over clients whose
//! local objective adds a consistency penalty on perturbed unlabeled data.
//! An *apprentice* is then trained over a drifting data stream, distilling
//! from the expert (and afterwards from its own previous snapshot) so earlier
//! domains are not forgotten.
//!
//! Module map:
//! - [`nn`]: dense and graph-convolution classifiers with exact gradients
//! - [`losses`]: softmax, cross-entropy, KL, consistency and distillation terms
//! - [`data`]: synthetic drifting streams, partitions, perturbations, splits, file IO
//! - [`fl`]: local updates, FedAvg, expert/apprentice training and baselines
//! - [`metrics`]: confusion counts, F1, PR-AUC, multi-seed aggregation
//! - [`experiment`]: config parsing, experiment runner, sweeps, result files

pub mod data;
pub mod error;
pub mod experiment;
pub mod fl;
pub mod graph;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
