use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::local::{incremental_local_update_cr, local_update_cr, run_epochs, ClientUpdate, LocalContext, LocalOutcome};
use super::prepared::{evaluate, EvalSet, Pool, PreparedClient};
use super::{fedavg_aggregate, FedMobileConfig};
use crate::data::{ClientData, Sample, StreamBatch};
use crate::error::{Error, Result};
use crate::losses::{softmax_rows, LossBreakdown, LossConfig};
use crate::metrics::MetricsReport;
use crate::nn::{forward, xavier_init, ModelParams, OptimizerConfig, OptimizerState};
use crate::rng;

const EXPERT_INIT: u64 = 0;
const APPRENTICE_INIT: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Expert,
    Stream { batch: usize },
    Centralized,
}

/// Record of one communication round (one epoch for centralized training).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    /// One-based; stream rounds continue the numbering after the expert rounds.
    pub round: usize,
    pub phase: Phase,
    /// Mean loss terms of each participating client, in client order.
    pub clients: Vec<(usize, LossBreakdown)>,
    pub skipped: Vec<usize>,
    /// Unweighted mean of the client losses.
    pub train_loss: LossBreakdown,
    /// Post-aggregation validation metrics, when the observer supplies a set.
    pub validation: Option<MetricsReport>,
}

/// Hooks called by the trainers.
pub trait RoundObserver {
    /// Validation set scored after every round.
    fn validation(&self) -> Option<&EvalSet> {
        None
    }

    fn on_round(&mut self, _log: &RoundLog, _model: &ModelParams) -> Result<()> {
        Ok(())
    }

    /// Called after stream batch `batch`, once the expert has been replaced
    /// by the apprentice snapshot.
    fn on_batch_end(&mut self, _batch: usize, _expert: &ModelParams, _apprentice: &ModelParams) -> Result<()> {
        Ok(())
    }
}

pub struct NoopObserver;

impl RoundObserver for NoopObserver {}

fn prepare(clients: &[ClientData]) -> Result<Vec<PreparedClient>> {
    clients.iter().map(PreparedClient::new).collect()
}

struct Round<'a> {
    cfg: &'a FedMobileConfig,
    loss: LossConfig,
    optimizer: OptimizerConfig,
    seed: u64,
}

impl Round<'_> {
    /// One round: every client updates from `global` (in parallel when
    /// configured), then the server aggregates in client order.
    fn run(
        &self,
        index: usize,
        phase: Phase,
        clients: &[PreparedClient],
        global: &ModelParams,
        expert: Option<&ModelParams>,
        observer: &mut dyn RoundObserver,
    ) -> Result<(ModelParams, RoundLog)> {
        let ctx = LocalContext {
            cfg: self.cfg,
            loss: self.loss,
            optimizer: self.optimizer,
            seed: self.seed,
            round: index,
        };
        let update = |c: &PreparedClient| match expert {
            None => local_update_cr(c, global, &ctx),
            Some(e) => incremental_local_update_cr(c, global, e, &ctx),
        };
        let wrap = |e: Error| Error::Round {
            round: index + 1,
            message: e.to_string(),
        };
        let outcomes: Vec<LocalOutcome> = if self.cfg.concurrent {
            clients.par_iter().map(update).collect::<Result<_>>()
        } else {
            clients.iter().map(update).collect::<Result<_>>()
        }
        .map_err(wrap)?;
        let mut updates: Vec<ClientUpdate> = Vec::new();
        let mut skipped = Vec::new();
        for o in outcomes {
            match o {
                LocalOutcome::Updated(u) => updates.push(u),
                LocalOutcome::Skipped { client_id } => skipped.push(client_id),
            }
        }
        if updates.is_empty() {
            return Err(Error::Round {
                round: index + 1,
                message: "every client skipped (no labeled data)".into(),
            });
        }
        let sizes: Vec<usize> = updates.iter().map(|u| u.num_samples).collect();
        let weights: Vec<ModelParams> = updates.iter().map(|u| u.weights.clone()).collect();
        let model = fedavg_aggregate(&weights, &sizes).map_err(wrap)?;
        if !model.is_finite() {
            return Err(wrap(Error::Numeric("aggregated weights are not finite".into())));
        }
        let losses: Vec<LossBreakdown> = updates.iter().map(|u| u.loss).collect();
        let log = finish_log(
            index,
            phase,
            updates.iter().map(|u| (u.client_id, u.loss)).collect(),
            skipped,
            LossBreakdown::mean(&losses),
            &model,
            observer,
        )?;
        Ok((model, log))
    }
}

fn finish_log(
    index: usize,
    phase: Phase,
    clients: Vec<(usize, LossBreakdown)>,
    skipped: Vec<usize>,
    train_loss: LossBreakdown,
    model: &ModelParams,
    observer: &mut dyn RoundObserver,
) -> Result<RoundLog> {
    let validation = match observer.validation() {
        Some(set) => Some(evaluate(model, set)?.report),
        None => None,
    };
    let log = RoundLog {
        round: index + 1,
        phase,
        clients,
        skipped,
        train_loss,
        validation,
    };
    observer.on_round(&log, model)?;
    Ok(log)
}

fn expert_phase(
    clients: &[PreparedClient],
    cfg: &FedMobileConfig,
    loss: LossConfig,
    seed: u64,
    observer: &mut dyn RoundObserver,
) -> Result<(ModelParams, Vec<RoundLog>)> {
    cfg.validate()?;
    if clients.is_empty() {
        return Err(Error::Config("no clients".into()));
    }
    let mut global = xavier_init(&cfg.model, rng::derive_seed(&[seed, EXPERT_INIT]))?;
    let round = Round {
        cfg,
        loss,
        optimizer: cfg.optimizer,
        seed,
    };
    let mut logs = Vec::with_capacity(cfg.expert_rounds);
    for c in 0..cfg.expert_rounds {
        let (next, log) = round.run(c, Phase::Expert, clients, &global, None, observer)?;
        global = next;
        logs.push(log);
    }
    Ok((global, logs))
}

/// Step 1: trains the expert with consistency-regularized local updates.
pub fn train_expert(
    clients: &[ClientData],
    cfg: &FedMobileConfig,
    seed: u64,
    observer: &mut dyn RoundObserver,
) -> Result<(ModelParams, Vec<RoundLog>)> {
    expert_phase(&prepare(clients)?, cfg, cfg.loss, seed, observer)
}

/// Step 2: trains a fresh (or warm-started) apprentice over the stream with
/// distillation from the expert; after each batch the expert becomes a
/// snapshot of the apprentice.
pub fn train_apprentice_stream(
    expert: &ModelParams,
    stream: &[StreamBatch],
    cfg: &FedMobileConfig,
    seed: u64,
    observer: &mut dyn RoundObserver,
) -> Result<(ModelParams, Vec<RoundLog>)> {
    cfg.validate()?;
    if expert.spec() != &cfg.model {
        return Err(Error::Dimension("expert architecture differs from the configured model".into()));
    }
    let mut apprentice = if cfg.warm_start {
        expert.clone()
    } else {
        xavier_init(&cfg.model, rng::derive_seed(&[seed, APPRENTICE_INIT]))?
    };
    let mut expert = expert.clone();
    let round = Round {
        cfg,
        loss: cfg.loss,
        optimizer: cfg.optimizer_step2,
        seed,
    };
    let mut logs = Vec::with_capacity(stream.len() * cfg.rounds_per_batch);
    for (t, batch) in stream.iter().enumerate() {
        let clients = prepare(&batch.clients)?;
        for c in 0..cfg.rounds_per_batch {
            let index = cfg.expert_rounds + t * cfg.rounds_per_batch + c;
            let phase = Phase::Stream { batch: batch.time_index };
            let (next, log) = round.run(index, phase, &clients, &apprentice, Some(&expert), observer)?;
            apprentice = next;
            logs.push(log);
        }
        expert = apprentice.clone();
        observer.on_batch_end(batch.time_index, &expert, &apprentice)?;
    }
    Ok((apprentice, logs))
}

/// Supervised FedAvg: the expert trainer without the consistency term and
/// with unlabeled pools dropped.
pub fn fedavg_supervised(
    clients: &[ClientData],
    cfg: &FedMobileConfig,
    seed: u64,
    observer: &mut dyn RoundObserver,
) -> Result<(ModelParams, Vec<RoundLog>)> {
    let prepared: Vec<PreparedClient> = prepare(clients)?
        .iter()
        .map(PreparedClient::without_unlabeled)
        .collect();
    let loss = LossConfig {
        lambda: 0.0,
        ..cfg.loss
    };
    expert_phase(&prepared, cfg, loss, seed, observer)
}

/// Single-worker training on pooled data with the step-1 objective, for
/// `epochs` epochs and one optimizer state throughout.
///
/// Randomness is keyed exactly like client 0 of a federated run, so with SGD a
/// one-client federation over `R` rounds of `E` epochs follows the same
/// trajectory as `R·E` centralized epochs.
pub fn centralized_train(
    pooled: &ClientData,
    cfg: &FedMobileConfig,
    epochs: usize,
    seed: u64,
    observer: &mut dyn RoundObserver,
) -> Result<(ModelParams, Vec<RoundLog>)> {
    cfg.validate()?;
    if pooled.labeled.is_empty() {
        return Err(Error::Config("centralized training needs labeled data".into()));
    }
    let mut client = PreparedClient::new(pooled)?;
    client.client_id = 0;
    let mut model = xavier_init(&cfg.model, rng::derive_seed(&[seed, EXPERT_INIT]))?;
    let mut state = OptimizerState::new(cfg.optimizer, &model)?;
    let mut logs = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let e = epoch as u64;
        let steps = run_epochs(&client, &mut model, None, cfg, &cfg.loss, &mut state, seed, e..e + 1)
            .map_err(|err| Error::Round {
                round: epoch + 1,
                message: err.to_string(),
            })?;
        let loss = LossBreakdown::mean(&steps);
        let log = finish_log(epoch, Phase::Centralized, vec![(0, loss)], Vec::new(), loss, &model, observer)?;
        logs.push(log);
    }
    Ok((model, logs))
}

/// Indices and classes of samples whose top predicted probability reaches
/// `threshold`.
pub fn pseudo_label(model: &ModelParams, samples: &[Sample], threshold: f64) -> Result<Vec<(usize, usize)>> {
    pseudo_label_threshold_ok(threshold)?;
    let Some(pool) = Pool::from_samples(samples)? else {
        return Ok(Vec::new());
    };
    let trace = forward(model, &pool.input())?;
    let probs = softmax_rows(trace.logits(), 1.0);
    Ok(probs
        .rows()
        .into_iter()
        .enumerate()
        .filter_map(|(i, row)| {
            let row = row.as_slice().expect("standard layout");
            let best = crate::losses::argmax(row);
            (row[best] >= threshold).then_some((i, best))
        })
        .collect())
}

/// Semi-supervised fine-tuning baseline: supervised FedAvg on the first
/// batch, then per stream batch pseudo-label each client's unlabeled pool with
/// the current model and fine-tune on labeled plus pseudo-labeled data.
pub fn fedsem_ft(
    clients: &[ClientData],
    stream: &[StreamBatch],
    cfg: &FedMobileConfig,
    threshold: f64,
    seed: u64,
    observer: &mut dyn RoundObserver,
) -> Result<(ModelParams, Vec<RoundLog>)> {
    pseudo_label_threshold_ok(threshold)?;
    let (mut model, mut logs) = fedavg_supervised(clients, cfg, seed, observer)?;
    let loss = LossConfig {
        lambda: 0.0,
        alpha: 0.0,
        ..cfg.loss
    };
    let round = Round {
        cfg,
        loss,
        optimizer: cfg.optimizer_step2,
        seed,
    };
    for (t, batch) in stream.iter().enumerate() {
        let mut augmented = Vec::with_capacity(batch.clients.len());
        for c in &batch.clients {
            let mut data = c.labeled_only();
            for (i, y) in pseudo_label(&model, &c.unlabeled, threshold)? {
                let mut s = c.unlabeled[i].clone();
                s.label = Some(y);
                data.labeled.push(s);
            }
            augmented.push(PreparedClient::new(&data)?);
        }
        for c in 0..cfg.rounds_per_batch {
            let index = cfg.expert_rounds + t * cfg.rounds_per_batch + c;
            let phase = Phase::Stream { batch: batch.time_index };
            let (next, log) = round.run(index, phase, &augmented, &model, None, observer)?;
            model = next;
            logs.push(log);
        }
    }
    Ok((model, logs))
}

fn pseudo_label_threshold_ok(threshold: f64) -> Result<()> {
    if threshold > 0.5 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "pseudo-label threshold must be in (0.5, 1], got {threshold}"
        )))
    }
}
