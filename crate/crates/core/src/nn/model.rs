use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mlp,
    Gcn,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::Gcn => "gcn",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(ModelKind::Mlp),
            "gcn" => Ok(ModelKind::Gcn),
            other => Err(Error::Input(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Input(format!("unknown activation `{other}`"))),
        }
    }
}

/// Shape and kind of a classifier.
///
/// For an MLP every hidden entry is a dense layer. For a GCN every hidden
/// entry is a graph-convolution layer, followed by mean pooling over nodes
/// and a dense output layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub model_kind: ModelKind,
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    pub activation: Activation,
}

impl ArchitectureSpec {
    pub const DEFAULT_HIDDEN: [usize; 2] = [128, 128];

    pub fn new(model_kind: ModelKind, input_dim: usize) -> Self {
        ArchitectureSpec {
            model_kind,
            input_dim,
            hidden_dims: Self::DEFAULT_HIDDEN.to_vec(),
            num_classes: 2,
            activation: Activation::Relu,
        }
    }

    pub fn with_hidden(mut self, hidden: &[usize]) -> Self {
        self.hidden_dims = hidden.to_vec();
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_classes(mut self, num_classes: usize) -> Self {
        self.num_classes = num_classes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Dimension("input_dim must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Dimension(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::Dimension("hidden dimensions must be positive".into()));
        }
        if self.model_kind == ModelKind::Gcn && self.hidden_dims.is_empty() {
            return Err(Error::Dimension(
                "a GCN needs at least one graph-convolution layer".into(),
            ));
        }
        Ok(())
    }

    /// Layer widths from input through hidden layers to the class logits.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_dims.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden_dims);
        w.push(self.num_classes);
        w
    }

    pub fn num_layers(&self) -> usize {
        self.hidden_dims.len() + 1
    }
}

/// One affine layer: `y = x W + b` with `W` stored fan_in x fan_out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

/// Classifier weights. Also used as the container for gradients and
/// optimizer moments, which share its shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    spec: ArchitectureSpec,
    layers: Vec<Layer>,
}

impl ModelParams {
    pub fn zeros(spec: &ArchitectureSpec) -> Result<Self> {
        spec.validate()?;
        let widths = spec.widths();
        let layers = widths
            .windows(2)
            .map(|w| Layer {
                weight: DenseMatrix::zeros(w[0], w[1]),
                bias: vec![0.0; w[1]],
            })
            .collect();
        Ok(ModelParams {
            spec: spec.clone(),
            layers,
        })
    }

    /// Assembles parameters from explicit layers, checking every invariant.
    pub fn from_layers(spec: ArchitectureSpec, layers: Vec<Layer>) -> Result<Self> {
        spec.validate()?;
        let widths = spec.widths();
        if layers.len() != widths.len() - 1 {
            return Err(Error::Dimension(format!(
                "expected {} layers, got {}",
                widths.len() - 1,
                layers.len()
            )));
        }
        for (i, (layer, w)) in layers.iter().zip(widths.windows(2)).enumerate() {
            if layer.weight.shape() != (w[0], w[1]) || layer.bias.len() != w[1] {
                return Err(Error::Dimension(format!(
                    "layer {i}: expected {}x{} weight and {} biases, got {:?} and {}",
                    w[0],
                    w[1],
                    w[1],
                    layer.weight.shape(),
                    layer.bias.len()
                )));
            }
            if !layer.weight.is_finite() || layer.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::Numeric(format!("layer {i} has non-finite entries")));
            }
        }
        Ok(ModelParams { spec, layers })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams::zeros(&self.spec).expect("spec already validated")
    }

    pub fn same_shape(&self, other: &ModelParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.shape() == b.weight.shape() && a.bias.len() == b.bias.len())
    }

    pub(crate) fn check_shape(&self, other: &ModelParams, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Dimension(format!("{what}: parameter shapes differ")))
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.values().len() + l.bias.len())
            .sum()
    }

    /// Flat view ordered layer by layer, weights (row-major) before biases.
    pub fn flat_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weight.values());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    fn locate(&self, mut index: usize) -> (usize, Option<usize>, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            let nw = l.weight.values().len();
            if index < nw {
                return (li, Some(index), 0);
            }
            index -= nw;
            if index < l.bias.len() {
                return (li, None, index);
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn get_flat(&self, index: usize) -> f64 {
        match self.locate(index) {
            (l, Some(w), _) => self.layers[l].weight.values()[w],
            (l, None, b) => self.layers[l].bias[b],
        }
    }

    pub fn set_flat(&mut self, index: usize, value: f64) {
        match self.locate(index) {
            (l, Some(w), _) => self.layers[l].weight.values_mut()[w] = value,
            (l, None, b) => self.layers[l].bias[b] = value,
        }
    }

    /// True when the flat index addresses a weight (not a bias).
    pub fn is_weight_index(&self, index: usize) -> bool {
        self.locate(index).1.is_some()
    }

    pub(crate) fn for_each_pair_mut(
        &mut self,
        other: &ModelParams,
        mut f: impl FnMut(&mut f64, f64),
    ) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, &y) in a.weight.values_mut().iter_mut().zip(b.weight.values()) {
                f(x, y);
            }
            for (x, &y) in a.bias.iter_mut().zip(&b.bias) {
                f(x, y);
            }
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) -> Result<()> {
        self.check_shape(other, "add_scaled")?;
        self.for_each_pair_mut(other, |x, y| *x += scale * y);
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight.values_mut().iter_mut().for_each(|v| *v *= factor);
            l.bias.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    pub fn max_abs_diff(&self, other: &ModelParams) -> f64 {
        self.flat_values()
            .iter()
            .zip(other.flat_values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Exact bit pattern of every parameter, for determinism checks.
    pub fn to_bits(&self) -> Vec<u64> {
        self.flat_values().iter().map(|v| v.to_bits()).collect()
    }

    pub(crate) fn weight_array(&self, layer: usize) -> &Array2<f64> {
        self.layers[layer].weight.as_array()
    }
}
