use crate::data::{perturb_features, perturb_graph, ClientData, Payload, Sample};
use crate::error::{Error, Result};
use crate::graph::TrajectoryGraph;
use crate::losses::{cross_entropy_batch, softmax_rows};
use crate::metrics::MetricsReport;
use crate::nn::{forward, DenseMatrix, ModelInput, ModelParams};
use crate::rng::StreamRng;

use super::Perturbation;

/// Inputs of a set of samples in model-ready form.
#[derive(Clone, Debug)]
pub(crate) enum Pool {
    Features(DenseMatrix),
    Graphs(Vec<TrajectoryGraph>),
}

impl Pool {
    pub(crate) fn from_samples<'a>(
        samples: impl IntoIterator<Item = &'a Sample>,
    ) -> Result<Option<Pool>> {
        let mut rows: Vec<&[f64]> = Vec::new();
        let mut graphs = Vec::new();
        for s in samples {
            match &s.payload {
                Payload::Features(f) => rows.push(f),
                Payload::Graph(g) => graphs.push(g.clone()),
            }
        }
        match (rows.is_empty(), graphs.is_empty()) {
            (true, true) => Ok(None),
            (false, true) => Ok(Some(Pool::Features(DenseMatrix::from_rows(&rows)?))),
            (true, false) => Ok(Some(Pool::Graphs(graphs))),
            (false, false) => Err(Error::Input("mixed feature and graph samples".into())),
        }
    }

    pub(crate) fn len(&self) -> usize {
        match self {
            Pool::Features(m) => m.rows(),
            Pool::Graphs(g) => g.len(),
        }
    }

    pub(crate) fn input(&self) -> ModelInput {
        match self {
            Pool::Features(m) => ModelInput::Features(m.clone()),
            Pool::Graphs(g) => ModelInput::Graphs(g.clone()),
        }
    }
}

/// One part of a stacked batch: rows of a pool, optionally perturbed.
pub(crate) struct Part<'a> {
    pub pool: &'a Pool,
    pub rows: &'a [usize],
    pub perturbed: bool,
}

/// Concatenates the parts into one model input, in order.
pub(crate) fn stack_input(
    parts: &[Part<'_>],
    perturbation: Perturbation,
    rng: &mut StreamRng,
) -> Result<ModelInput> {
    let total: usize = parts.iter().map(|p| p.rows.len()).sum();
    match parts.first().map(|p| p.pool) {
        None => Err(Error::DegenerateInput("empty batch".into())),
        Some(Pool::Features(first)) => {
            let cols = first.cols();
            let mut values = Vec::with_capacity(total * cols);
            for part in parts {
                let Pool::Features(m) = part.pool else {
                    return Err(Error::Input("mixed feature and graph pools".into()));
                };
                for &i in part.rows {
                    if part.perturbed {
                        values.extend(perturb_features(m.row(i), perturbation.noise_sd, rng));
                    } else {
                        values.extend_from_slice(m.row(i));
                    }
                }
            }
            Ok(ModelInput::Features(DenseMatrix::from_vec(total, cols, values)?))
        }
        Some(Pool::Graphs(_)) => {
            let mut graphs = Vec::with_capacity(total);
            for part in parts {
                let Pool::Graphs(g) = part.pool else {
                    return Err(Error::Input("mixed feature and graph pools".into()));
                };
                for &i in part.rows {
                    if part.perturbed {
                        graphs.push(perturb_graph(&g[i], perturbation.edge_flip_prob, rng)?);
                    } else {
                        graphs.push(g[i].clone());
                    }
                }
            }
            Ok(ModelInput::Graphs(graphs))
        }
    }
}

/// A client's data converted once into model-ready pools.
#[derive(Clone, Debug)]
pub struct PreparedClient {
    pub client_id: usize,
    pub(crate) labeled: Option<Pool>,
    pub(crate) labels: Vec<usize>,
    pub(crate) unlabeled: Option<Pool>,
}

impl PreparedClient {
    pub fn new(data: &ClientData) -> Result<Self> {
        let labels = crate::data::labels_of(&data.labeled)?;
        if data.unlabeled.iter().any(Sample::is_labeled) {
            return Err(Error::Input("labeled sample in an unlabeled pool".into()));
        }
        Ok(PreparedClient {
            client_id: data.client_id,
            labeled: Pool::from_samples(&data.labeled)?,
            labels,
            unlabeled: Pool::from_samples(&data.unlabeled)?,
        })
    }

    /// Labeled count `n_k` used as the aggregation weight.
    pub fn num_labeled(&self) -> usize {
        self.labels.len()
    }

    pub fn num_unlabeled(&self) -> usize {
        self.unlabeled.as_ref().map_or(0, Pool::len)
    }

    pub fn without_unlabeled(&self) -> Self {
        PreparedClient {
            unlabeled: None,
            ..self.clone()
        }
    }
}

/// A labeled evaluation set.
#[derive(Clone, Debug)]
pub struct EvalSet {
    input: ModelInput,
    labels: Vec<usize>,
}

impl EvalSet {
    pub fn new<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Result<Self> {
        let samples: Vec<&Sample> = samples.into_iter().collect();
        let labels = crate::data::labels_of(samples.iter().copied())?;
        let pool = Pool::from_samples(samples)?
            .ok_or_else(|| Error::DegenerateInput("empty evaluation set".into()))?;
        Ok(EvalSet {
            input: pool.input(),
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    /// Mean cross-entropy on the set.
    pub ce: f64,
}

/// Scores a model: prediction is the argmax class, the ranking score is the
/// predicted probability of class 1.
pub fn evaluate(params: &ModelParams, set: &EvalSet) -> Result<Evaluation> {
    let trace = forward(params, &set.input)?;
    let logits = trace.logits();
    let probs = softmax_rows(logits, 1.0);
    let mut predicted = Vec::with_capacity(set.len());
    let mut scores = Vec::with_capacity(set.len());
    for row in probs.rows() {
        let row = row.as_slice().expect("standard layout");
        predicted.push(crate::losses::argmax(row));
        scores.push(if row.len() > 1 { row[1] } else { 0.0 });
    }
    let (ce, _) = cross_entropy_batch(logits, &set.labels)?;
    Ok(Evaluation {
        report: MetricsReport::from_predictions(&predicted, &scores, &set.labels)?,
        ce,
    })
}
