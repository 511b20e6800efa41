use std::ops::Range;

use rand::seq::SliceRandom;

use super::prepared::{stack_input, Part, PreparedClient};
use super::FedMobileConfig;
use crate::error::{Error, Result};
use crate::losses::{composite_step1_loss, composite_step2_loss, BatchLogits, LossBreakdown, LossConfig};
use crate::nn::{
    apply_update, backward, forward, DenseMatrix, ModelParams, OptimizerConfig, OptimizerState,
};
use crate::rng::{self, tag};

/// Per-round settings shared by all clients.
#[derive(Clone, Copy, Debug)]
pub struct LocalContext<'a> {
    pub cfg: &'a FedMobileConfig,
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    /// Zero-based global round index; selects the rng streams.
    pub round: usize,
}

#[derive(Clone, Debug)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub weights: ModelParams,
    /// Aggregation weight `n_k`.
    pub num_samples: usize,
    /// Mean loss terms over the update's optimizer steps.
    pub loss: LossBreakdown,
    pub steps: usize,
}

#[derive(Clone, Debug)]
pub enum LocalOutcome {
    Updated(ClientUpdate),
    /// The client held no labeled data and sat the round out.
    Skipped { client_id: usize },
}

/// Local training from `global`: E epochs over shuffled labeled batches, each
/// paired with a cycled unlabeled batch for the consistency term.
pub fn local_update_cr(
    client: &PreparedClient,
    global: &ModelParams,
    ctx: &LocalContext<'_>,
) -> Result<LocalOutcome> {
    local_update(client, global, None, ctx)
}

/// Same loop as [`local_update_cr`] with the distillation loss against a
/// frozen expert evaluated on the same labeled batch.
pub fn incremental_local_update_cr(
    client: &PreparedClient,
    apprentice: &ModelParams,
    expert: &ModelParams,
    ctx: &LocalContext<'_>,
) -> Result<LocalOutcome> {
    if !expert.same_shape(apprentice) {
        return Err(Error::Dimension("expert and apprentice shapes differ".into()));
    }
    local_update(client, apprentice, Some(expert), ctx)
}

fn local_update(
    client: &PreparedClient,
    start: &ModelParams,
    expert: Option<&ModelParams>,
    ctx: &LocalContext<'_>,
) -> Result<LocalOutcome> {
    if client.num_labeled() == 0 {
        return Ok(LocalOutcome::Skipped {
            client_id: client.client_id,
        });
    }
    let mut weights = start.clone();
    let mut state = OptimizerState::new(ctx.optimizer, &weights)?;
    let e = ctx.cfg.local_epochs as u64;
    let first = ctx.round as u64 * e;
    let steps = run_epochs(
        client,
        &mut weights,
        expert,
        ctx.cfg,
        &ctx.loss,
        &mut state,
        ctx.seed,
        first..first + e,
    )?;
    Ok(LocalOutcome::Updated(ClientUpdate {
        client_id: client.client_id,
        weights,
        num_samples: client.num_labeled(),
        loss: LossBreakdown::mean(&steps),
        steps: steps.len(),
    }))
}

fn row_range(m: &DenseMatrix, range: Range<usize>) -> DenseMatrix {
    let idx: Vec<usize> = range.collect();
    m.select_rows(&idx)
}

fn stack_rows(parts: &[&DenseMatrix]) -> Result<DenseMatrix> {
    let cols = parts[0].cols();
    let rows: usize = parts.iter().map(|m| m.rows()).sum();
    let mut values = Vec::with_capacity(rows * cols);
    for m in parts {
        values.extend_from_slice(m.values());
    }
    DenseMatrix::from_vec(rows, cols, values)
}

/// Runs the given epochs, keyed for randomness by their indices, and returns
/// the loss breakdown of every optimizer step.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_epochs(
    client: &PreparedClient,
    weights: &mut ModelParams,
    expert: Option<&ModelParams>,
    cfg: &FedMobileConfig,
    loss: &LossConfig,
    state: &mut OptimizerState,
    seed: u64,
    epochs: Range<u64>,
) -> Result<Vec<LossBreakdown>> {
    let Some(labeled) = client.labeled.as_ref() else {
        return Err(Error::Input(format!("client {} has no labeled data", client.client_id)));
    };
    let k = client.client_id as u64;
    let unl_batch = cfg.unlabeled_batch_size();
    let unlabeled = client
        .unlabeled
        .as_ref()
        .filter(|_| loss.lambda > 0.0 && unl_batch > 0);
    let mut log = Vec::new();
    for epoch in epochs {
        let mut order: Vec<usize> = (0..labeled.len()).collect();
        order.shuffle(&mut rng::stream(&[tag::SHUFFLE, seed, k, epoch]));
        let mut unl_order: Vec<usize> = Vec::new();
        if let Some(u) = unlabeled {
            unl_order = (0..u.len()).collect();
            unl_order.shuffle(&mut rng::stream(&[tag::SHUFFLE, seed, k, epoch, 1]));
        }
        let mut perturb_rng = rng::stream(&[tag::PERTURB, seed, k, epoch]);
        let mut cursor = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let b = chunk.len();
            let mut unl_rows = Vec::new();
            if !unl_order.is_empty() {
                let m = unl_batch.min(unl_order.len());
                for _ in 0..m {
                    unl_rows.push(unl_order[cursor]);
                    cursor = (cursor + 1) % unl_order.len();
                }
            }
            let mut parts = vec![Part {
                pool: labeled,
                rows: chunk,
                perturbed: false,
            }];
            if let Some(u) = unlabeled {
                parts.push(Part { pool: u, rows: &unl_rows, perturbed: false });
                parts.push(Part { pool: u, rows: &unl_rows, perturbed: true });
            }
            let input = stack_input(&parts, cfg.perturbation, &mut perturb_rng)?;
            let trace = forward(weights, &input)?;
            let logits = trace.logits();
            let m = unl_rows.len();
            let lab_logits = row_range(logits, 0..b);
            let (clean, pert) = if unlabeled.is_some() {
                (
                    Some(row_range(logits, b..b + m)),
                    Some(row_range(logits, b + m..b + 2 * m)),
                )
            } else {
                (None, None)
            };
            let labels: Vec<usize> = chunk.iter().map(|&i| client.labels[i]).collect();
            let batch = BatchLogits {
                labeled: &lab_logits,
                labels: &labels,
                unlabeled: clean.as_ref().zip(pert.as_ref()),
            };
            let (breakdown, grads) = match expert {
                None => composite_step1_loss(batch, weights, loss)?,
                Some(expert) => {
                    let lab_input = stack_input(&parts[..1], cfg.perturbation, &mut perturb_rng)?;
                    let expert_logits = forward(expert, &lab_input)?.logits().clone();
                    composite_step2_loss(batch, &expert_logits, weights, loss)?
                }
            };
            let logit_grad = if unlabeled.is_some() {
                let zeros = DenseMatrix::zeros(m, logits.cols());
                let c = grads.clean.as_ref().unwrap_or(&zeros);
                let p = grads.perturbed.as_ref().unwrap_or(&zeros);
                stack_rows(&[&grads.labeled, c, p])?
            } else {
                grads.labeled
            };
            let mut g = backward(weights, &trace, &logit_grad)?;
            g.add_scaled(&grads.reg, 1.0)?;
            apply_update(weights, &g, state)?;
            log.push(breakdown);
        }
    }
    Ok(log)
}
