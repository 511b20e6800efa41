//! Synthetic streaming data standing in for passively sensed mobile data:
//! feature vectors or trajectory graphs, drifting across time batches, with
//! sparse labels, class imbalance and IID/Dirichlet client partitions.

mod generator;
mod io;
mod partition;
mod perturb;
mod split;

use serde::{Deserialize, Serialize};

pub use crate::graph::{build_mobility_graph, TrajectoryGraph};
pub use generator::{
    domain_at, generate_stream, DomainDescriptor, GeneratorConfig, Modality, PartitionMode,
};
pub use io::{read_samples, write_samples};
pub use partition::partition_clients;
pub use perturb::{perturb_features, perturb_graph};
pub use split::{split_dataset, SplitRatios};

use crate::error::{Error, Result};
use crate::nn::{DenseMatrix, ModelInput};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Features(Vec<f64>),
    Graph(TrajectoryGraph),
}

/// One observation. Unlabeled samples carry `label: None`, never a sentinel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub payload: Payload,
    pub label: Option<usize>,
    pub client_id: usize,
    pub time_index: usize,
}

impl Sample {
    pub fn is_labeled(&self) -> bool {
        self.label.is_some()
    }
}

/// A client's private view of one time batch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClientData {
    pub client_id: usize,
    pub labeled: Vec<Sample>,
    pub unlabeled: Vec<Sample>,
}

impl ClientData {
    pub fn new(client_id: usize) -> Self {
        ClientData {
            client_id,
            ..Default::default()
        }
    }

    pub fn from_samples(client_id: usize, samples: impl IntoIterator<Item = Sample>) -> Self {
        let mut c = ClientData::new(client_id);
        for s in samples {
            if s.is_labeled() {
                c.labeled.push(s);
            } else {
                c.unlabeled.push(s);
            }
        }
        c
    }

    pub fn len(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same client with its unlabeled pool dropped.
    pub fn labeled_only(&self) -> ClientData {
        ClientData {
            client_id: self.client_id,
            labeled: self.labeled.clone(),
            unlabeled: Vec::new(),
        }
    }
}

/// Data arriving at time `t`, already distributed over clients.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamBatch {
    pub time_index: usize,
    pub clients: Vec<ClientData>,
    /// Extra fully labeled samples from the same domain, never used for training.
    pub holdout: Vec<Sample>,
    pub domain: DomainDescriptor,
}

impl StreamBatch {
    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.clients
            .iter()
            .flat_map(|c| c.labeled.iter().chain(&c.unlabeled))
    }

    pub fn labeled_fraction(&self) -> f64 {
        let total: usize = self.clients.iter().map(ClientData::len).sum();
        let labeled: usize = self.clients.iter().map(|c| c.labeled.len()).sum();
        if total == 0 {
            0.0
        } else {
            labeled as f64 / total as f64
        }
    }
}

/// Stacks sample payloads into a model input batch.
pub fn to_model_input<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Result<ModelInput> {
    let mut rows: Vec<&[f64]> = Vec::new();
    let mut graphs = Vec::new();
    for s in samples {
        match &s.payload {
            Payload::Features(f) => rows.push(f),
            Payload::Graph(g) => graphs.push(g.clone()),
        }
    }
    match (rows.is_empty(), graphs.is_empty()) {
        (false, true) => Ok(ModelInput::Features(DenseMatrix::from_rows(&rows)?)),
        (true, false) => Ok(ModelInput::Graphs(graphs)),
        (true, true) => Err(Error::DegenerateInput("no samples".into())),
        (false, false) => Err(Error::Input("mixed feature and graph samples".into())),
    }
}

/// Labels of labeled samples; fails on any unlabeled sample.
pub fn labels_of<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Result<Vec<usize>> {
    samples
        .into_iter()
        .map(|s| {
            s.label
                .ok_or_else(|| Error::Input("unlabeled sample where a label is required".into()))
        })
        .collect()
}
