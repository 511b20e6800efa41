use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig};
use crate::data::{generate_stream, split_dataset, ClientData, Sample, SplitRatios, StreamBatch};
use crate::error::{Error, Result};
use crate::fl::{
    centralized_train, evaluate, fedavg_supervised, fedsem_ft, train_apprentice_stream,
    train_expert, EvalSet, RoundLog, RoundObserver,
};
use crate::metrics::MetricsReport;
use crate::nn::ModelParams;
use crate::rng::{self, tag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Input(format!("unknown split `{s}`"))),
        }
    }
}

/// One line of the results table. Train rows carry the round's mean training
/// loss terms; validation and test rows carry the evaluation cross-entropy and
/// zero for the other terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub algorithm: Algorithm,
    pub model: crate::nn::ModelKind,
    pub seed: u64,
    pub round: usize,
    pub split: Split,
    pub f1: f64,
    pub pr_auc: f64,
    pub ce: f64,
    pub cr: f64,
    pub kd: f64,
    pub reg: f64,
}

/// Everything produced for one seed.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub rows: Vec<ResultRow>,
    pub logs: Vec<RoundLog>,
    pub model: ModelParams,
    /// Test metrics of the final model.
    pub final_test: MetricsReport,
    pub final_validation: MetricsReport,
    /// Test metrics at the round with the best validation F1 (first on ties).
    pub best_val_test: MetricsReport,
    /// Final model on the held-out part of the first batch.
    pub retention: MetricsReport,
}

/// Data of one seed after generation and splitting.
#[derive(Clone, Debug)]
pub struct PreparedData {
    /// Training clients per batch; batch 0 trains the expert.
    pub train: Vec<StreamBatch>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
    /// Test and holdout samples of batch 0.
    pub retention: Vec<Sample>,
}

/// Generates `T + 1` batches and splits every batch 70/20/10. Training samples
/// stay with their clients; validation and test samples are pooled over all
/// batches, together with any holdout samples.
pub fn prepare_data(cfg: &ExperimentConfig, seed: u64) -> Result<PreparedData> {
    let mut gen = cfg.generator.clone();
    gen.seed = seed;
    let stream = generate_stream(&gen, cfg.fl.stream_batches + 1)?;
    let mut train = Vec::with_capacity(stream.len());
    let mut validation = Vec::new();
    let mut test = Vec::new();
    let mut retention = Vec::new();
    for batch in stream {
        let t = batch.time_index as u64;
        let samples: Vec<Sample> = batch.samples().cloned().collect();
        let (tr, va, mut te) =
            split_dataset(samples, SplitRatios::default(), rng::derive_seed(&[seed, t]))?;
        te.extend(batch.holdout.iter().cloned());
        let mut by_client: Vec<Vec<Sample>> = vec![Vec::new(); gen.num_clients];
        for s in tr {
            by_client[s.client_id].push(s);
        }
        if cfg.train_subsample < 1.0 {
            let mut r = rng::stream(&[tag::SUBSAMPLE, seed, t]);
            for c in &mut by_client {
                c.retain(|_| r.random_bool(cfg.train_subsample));
            }
        }
        let clients = by_client
            .into_iter()
            .enumerate()
            .map(|(k, s)| ClientData::from_samples(k, s))
            .collect();
        if t == 0 {
            retention = te.clone();
        }
        validation.extend(va);
        test.extend(te);
        train.push(StreamBatch {
            time_index: batch.time_index,
            clients,
            holdout: Vec::new(),
            domain: batch.domain,
        });
    }
    Ok(PreparedData {
        train,
        validation,
        test,
        retention,
    })
}

struct Recorder<'a> {
    cfg: &'a ExperimentConfig,
    seed: u64,
    validation: EvalSet,
    test: EvalSet,
    /// Labeled training samples of the phase currently training, per batch.
    train_sets: BTreeMap<usize, EvalSet>,
    central_train: Option<EvalSet>,
    rows: Vec<ResultRow>,
    best: Option<(f64, MetricsReport)>,
}

impl Recorder<'_> {
    fn row(&self, round: usize, split: Split, r: &MetricsReport) -> ResultRow {
        ResultRow {
            algorithm: self.cfg.algorithm,
            model: self.cfg.fl.model.model_kind,
            seed: self.seed,
            round,
            split,
            f1: r.f1,
            pr_auc: r.pr_auc,
            ce: 0.0,
            cr: 0.0,
            kd: 0.0,
            reg: 0.0,
        }
    }
}

impl RoundObserver for Recorder<'_> {
    fn validation(&self) -> Option<&EvalSet> {
        Some(&self.validation)
    }

    fn on_round(&mut self, log: &RoundLog, model: &ModelParams) -> Result<()> {
        let train_set = match log.phase {
            crate::fl::Phase::Expert => self.train_sets.get(&0),
            crate::fl::Phase::Stream { batch } => self.train_sets.get(&batch),
            crate::fl::Phase::Centralized => self.central_train.as_ref(),
        };
        let train_report = match train_set {
            Some(set) => evaluate(model, set)?.report,
            None => MetricsReport::from_predictions(&[], &[], &[])?,
        };
        let mut train = self.row(log.round, Split::Train, &train_report);
        let l = log.train_loss;
        (train.ce, train.cr, train.kd, train.reg) = (l.ce, l.cr, l.kd, l.reg);
        let val_eval = evaluate(model, &self.validation)?;
        let mut val = self.row(log.round, Split::Val, &val_eval.report);
        val.ce = val_eval.ce;
        let test_eval = evaluate(model, &self.test)?;
        let mut test = self.row(log.round, Split::Test, &test_eval.report);
        test.ce = test_eval.ce;
        if self.best.as_ref().is_none_or(|(f1, _)| val_eval.report.f1 > *f1) {
            self.best = Some((val_eval.report.f1, test_eval.report));
        }
        self.rows.extend([train, val, test]);
        Ok(())
    }
}

fn labeled_set<'a>(clients: impl IntoIterator<Item = &'a ClientData>) -> Result<Option<EvalSet>> {
    let samples: Vec<&Sample> = clients.into_iter().flat_map(|c| &c.labeled).collect();
    if samples.is_empty() {
        Ok(None)
    } else {
        EvalSet::new(samples).map(Some)
    }
}

fn pooled(batches: &[StreamBatch]) -> ClientData {
    ClientData::from_samples(0, batches.iter().flat_map(|b| b.samples().cloned()))
}

/// Runs the configured algorithm for one seed.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let wrap = |e: Error| Error::Seed {
        seed,
        source: Box::new(e),
    };
    run_seed_inner(cfg, seed).map_err(wrap)
}

fn run_seed_inner(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    cfg.validate()?;
    let data = prepare_data(cfg, seed)?;
    let mut train_sets = BTreeMap::new();
    for b in &data.train {
        if let Some(set) = labeled_set(&b.clients)? {
            train_sets.insert(b.time_index, set);
        }
    }
    let central_train = match cfg.algorithm {
        Algorithm::Centralized => labeled_set(data.train.iter().flat_map(|b| &b.clients))?,
        _ => None,
    };
    let mut rec = Recorder {
        cfg,
        seed,
        validation: EvalSet::new(&data.validation)?,
        test: EvalSet::new(&data.test)?,
        train_sets,
        central_train,
        rows: Vec::new(),
        best: None,
    };
    let fl = &cfg.fl;
    let first = &data.train[0].clients;
    let rest = &data.train[1..];
    let (model, logs) = match cfg.algorithm {
        Algorithm::FedMobile => {
            let (expert, mut logs) = train_expert(first, fl, seed, &mut rec)?;
            let (apprentice, more) = train_apprentice_stream(&expert, rest, fl, seed, &mut rec)?;
            logs.extend(more);
            (apprentice, logs)
        }
        Algorithm::FedAvg => fedavg_supervised(first, fl, seed, &mut rec)?,
        Algorithm::FedSemFt => fedsem_ft(first, rest, fl, cfg.fedsem_threshold, seed, &mut rec)?,
        Algorithm::Centralized => {
            centralized_train(&pooled(&data.train), fl, cfg.central_epochs, seed, &mut rec)?
        }
    };
    let final_test = evaluate(&model, &rec.test)?.report;
    let final_validation = evaluate(&model, &rec.validation)?.report;
    let best_val_test = rec
        .best
        .take()
        .map(|(_, r)| r)
        .unwrap_or(final_test);
    let retention = evaluate(&model, &EvalSet::new(&data.retention)?)?.report;
    Ok(SeedRun {
        seed,
        rows: rec.rows,
        logs,
        model,
        final_test,
        final_validation,
        best_val_test,
        retention,
    })
}

/// Runs every seed and returns rows sorted by (algorithm, seed, round, split).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    Ok(run_seeds(cfg)?.into_iter().flat_map(|r| r.rows).collect())
}

/// Runs every seed, in parallel when configured, returning runs in seed order.
pub fn run_seeds(cfg: &ExperimentConfig) -> Result<Vec<SeedRun>> {
    cfg.validate()?;
    let mut runs: Vec<SeedRun> = if cfg.parallel_seeds {
        cfg.seeds.par_iter().map(|&s| run_seed(cfg, s)).collect::<Result<_>>()?
    } else {
        cfg.seeds.iter().map(|&s| run_seed(cfg, s)).collect::<Result<_>>()?
    };
    runs.sort_by_key(|r| r.seed);
    for r in &mut runs {
        r.rows.sort_by(|a, b| {
            (a.algorithm, a.seed, a.round, a.split).cmp(&(b.algorithm, b.seed, b.round, b.split))
        });
    }
    Ok(runs)
}
