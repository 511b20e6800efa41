use ndarray::{Array2, ArrayView1, Axis};

use super::matrix::DenseMatrix;
use super::model::{Activation, ModelKind, ModelParams};
use crate::error::{Error, Result};
use crate::graph::TrajectoryGraph;

/// A batch of model inputs: either feature rows or one graph per sample.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelInput {
    Features(DenseMatrix),
    Graphs(Vec<TrajectoryGraph>),
}

impl ModelInput {
    pub fn len(&self) -> usize {
        match self {
            ModelInput::Features(m) => m.rows(),
            ModelInput::Graphs(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug)]
pub(crate) struct LayerRecord {
    /// Matrix multiplied by the layer weight (the aggregated input for graph layers).
    pub input: Array2<f64>,
    pub pre: Array2<f64>,
    pub act: Array2<f64>,
}

#[derive(Clone, Debug)]
pub(crate) struct GraphRecord {
    pub adjacency: Array2<f64>,
    pub convs: Vec<LayerRecord>,
}

/// Everything backpropagation needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub(crate) kind: ModelKind,
    pub(crate) activation: Activation,
    /// Dense stack: every layer for an MLP, only the output layer for a GCN.
    pub(crate) dense: Vec<LayerRecord>,
    pub(crate) graphs: Vec<GraphRecord>,
    logits: DenseMatrix,
}

impl ForwardTrace {
    pub fn logits(&self) -> &DenseMatrix {
        &self.logits
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// Number of layers traversed, equal to the model's layer count.
    pub fn depth(&self) -> usize {
        match self.kind {
            ModelKind::Mlp => self.dense.len(),
            ModelKind::Gcn => self.graphs.first().map_or(0, |g| g.convs.len()) + self.dense.len(),
        }
    }

    /// Pre-activations of dense layer `layer` (MLP) as a matrix, one row per sample.
    pub fn pre_activations(&self, layer: usize) -> Option<DenseMatrix> {
        self.dense
            .get(layer)
            .map(|r| DenseMatrix::from_array_unchecked(r.pre.clone()))
    }

    pub fn activations(&self, layer: usize) -> Option<DenseMatrix> {
        self.dense
            .get(layer)
            .map(|r| DenseMatrix::from_array_unchecked(r.act.clone()))
    }
}

pub(crate) fn standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

fn affine(input: &Array2<f64>, weight: &Array2<f64>, bias: &[f64]) -> Array2<f64> {
    let mut z = standard(input.dot(weight));
    z += &ArrayView1::from(bias);
    z
}

/// Dispatches on the model kind, checking that the input matches it.
pub fn forward(params: &ModelParams, input: &ModelInput) -> Result<ForwardTrace> {
    match (params.spec().model_kind, input) {
        (ModelKind::Mlp, ModelInput::Features(x)) => forward_mlp(params, x),
        (ModelKind::Gcn, ModelInput::Graphs(g)) => forward_gcn(params, g),
        (kind, _) => Err(Error::Input(format!(
            "{} model cannot consume this input modality",
            kind.name()
        ))),
    }
}

/// Dense forward pass: activation on hidden layers, identity on the output.
pub fn forward_mlp(params: &ModelParams, features: &DenseMatrix) -> Result<ForwardTrace> {
    let spec = params.spec();
    if spec.model_kind != ModelKind::Mlp {
        return Err(Error::Input("forward_mlp needs an MLP model".into()));
    }
    if features.cols() != spec.input_dim {
        return Err(Error::Dimension(format!(
            "features have {} columns, model expects {}",
            features.cols(),
            spec.input_dim
        )));
    }
    let act = spec.activation;
    let last = params.layers().len() - 1;
    let mut h = features.as_array().clone();
    let mut dense = Vec::with_capacity(last + 1);
    for (l, layer) in params.layers().iter().enumerate() {
        let pre = affine(&h, layer.weight.as_array(), &layer.bias);
        let out = if l == last {
            pre.clone()
        } else {
            pre.mapv(|z| act.apply(z))
        };
        let input = std::mem::replace(&mut h, out.clone());
        dense.push(LayerRecord {
            input,
            pre,
            act: out,
        });
    }
    Ok(ForwardTrace {
        kind: ModelKind::Mlp,
        activation: act,
        dense,
        graphs: Vec::new(),
        logits: DenseMatrix::from_array_unchecked(h),
    })
}

/// Graph forward pass over a batch of graphs, one logit row per graph.
///
/// Each hidden layer computes `act(Â H W + b)` with the self-loop normalized
/// adjacency `Â`; node embeddings are then mean pooled and passed through the
/// dense output layer.
pub fn forward_gcn(params: &ModelParams, graphs: &[TrajectoryGraph]) -> Result<ForwardTrace> {
    let spec = params.spec();
    if spec.model_kind != ModelKind::Gcn {
        return Err(Error::Input("forward_gcn needs a GCN model".into()));
    }
    if graphs.is_empty() {
        return Err(Error::DegenerateInput("no graphs to evaluate".into()));
    }
    let act = spec.activation;
    let layers = params.layers();
    let (convs, output) = layers.split_at(layers.len() - 1);
    let pooled_dim = *spec.hidden_dims.last().expect("validated");
    let mut pooled = Array2::zeros((graphs.len(), pooled_dim));
    let mut records = Vec::with_capacity(graphs.len());
    for (gi, g) in graphs.iter().enumerate() {
        if g.num_nodes() == 0 {
            return Err(Error::DegenerateInput("empty graph".into()));
        }
        if g.feature_dim() != spec.input_dim {
            return Err(Error::Dimension(format!(
                "node features have dimension {}, model expects {}",
                g.feature_dim(),
                spec.input_dim
            )));
        }
        let adjacency = g.normalized_adjacency();
        let mut h = g.feature_matrix();
        let mut conv_records = Vec::with_capacity(convs.len());
        for layer in convs {
            let input = standard(adjacency.dot(&h));
            let pre = affine(&input, layer.weight.as_array(), &layer.bias);
            let out = pre.mapv(|z| act.apply(z));
            h = out.clone();
            conv_records.push(LayerRecord {
                input,
                pre,
                act: out,
            });
        }
        pooled
            .row_mut(gi)
            .assign(&h.mean_axis(Axis(0)).expect("nonempty graph"));
        records.push(GraphRecord {
            adjacency,
            convs: conv_records,
        });
    }
    let out_layer = &output[0];
    let logits = affine(&pooled, out_layer.weight.as_array(), &out_layer.bias);
    Ok(ForwardTrace {
        kind: ModelKind::Gcn,
        activation: act,
        dense: vec![LayerRecord {
            input: pooled,
            pre: logits.clone(),
            act: logits.clone(),
        }],
        graphs: records,
        logits: DenseMatrix::from_array_unchecked(logits),
    })
}
