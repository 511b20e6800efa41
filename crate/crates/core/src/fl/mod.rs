//! Federated training: local updates with consistency regularization, the
//! incremental distillation update, FedAvg aggregation, the two-step
//! expert/apprentice procedure and the baseline trainers.
//!
//! Every client update draws randomness from streams keyed by
//! `(seed, client, epoch index)`, and aggregation always runs in ascending
//! client order, so results do not depend on whether clients run in parallel.

mod aggregate;
mod local;
mod prepared;
mod train;

use serde::{Deserialize, Serialize};

pub use aggregate::fedavg_aggregate;
pub use local::{incremental_local_update_cr, local_update_cr, ClientUpdate, LocalContext, LocalOutcome};
pub use prepared::{evaluate, EvalSet, Evaluation, PreparedClient};
pub use train::{
    centralized_train, fedavg_supervised, fedsem_ft, pseudo_label, train_apprentice_stream,
    train_expert, NoopObserver, Phase, RoundLog, RoundObserver,
};

use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::nn::{ArchitectureSpec, OptimizerConfig};

/// Stochastic perturbation used by the consistency term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// Gaussian noise standard deviation for feature inputs.
    pub noise_sd: f64,
    /// Edge toggle probability for graph inputs.
    pub edge_flip_prob: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation {
            noise_sd: 0.5,
            edge_flip_prob: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FedMobileConfig {
    pub model: ArchitectureSpec,
    /// Expert (step 1) communication rounds.
    pub expert_rounds: usize,
    /// Communication rounds per stream batch in step 2.
    pub rounds_per_batch: usize,
    /// Number of stream batches after the expert batch.
    pub stream_batches: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    /// Unlabeled batch size as a multiple of the labeled batch size.
    pub unlabeled_ratio: f64,
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
    /// Optimizer for step 2; same kind as `optimizer`, possibly another rate.
    pub optimizer_step2: OptimizerConfig,
    pub perturbation: Perturbation,
    /// Start the apprentice from the expert instead of a fresh initialization.
    pub warm_start: bool,
    /// Run client updates of a round on the rayon pool.
    pub concurrent: bool,
}

impl FedMobileConfig {
    pub fn new(model: ArchitectureSpec) -> Self {
        let optimizer = OptimizerConfig::adamw(1e-3);
        FedMobileConfig {
            model,
            expert_rounds: 40,
            rounds_per_batch: 10,
            stream_batches: 8,
            local_epochs: 1,
            batch_size: 256,
            unlabeled_ratio: 1.0,
            loss: LossConfig::default(),
            optimizer,
            optimizer_step2: optimizer,
            perturbation: Perturbation::default(),
            warm_start: false,
            concurrent: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        self.optimizer.validate()?;
        self.optimizer_step2.validate()?;
        if self.local_epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("local_epochs and batch_size must be >= 1".into()));
        }
        if !(self.unlabeled_ratio.is_finite() && self.unlabeled_ratio >= 0.0) {
            return Err(Error::Config("unlabeled_ratio must be >= 0".into()));
        }
        let p = self.perturbation;
        if !(p.noise_sd.is_finite() && p.noise_sd >= 0.0) {
            return Err(Error::Config("noise_sd must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&p.edge_flip_prob) {
            return Err(Error::Config("edge_flip_prob must be in [0, 1]".into()));
        }
        Ok(())
    }

    /// Rounds logged by a full two-step run.
    pub fn total_rounds(&self) -> usize {
        self.expert_rounds + self.stream_batches * self.rounds_per_batch
    }

    /// Unlabeled batch size paired with each labeled batch.
    pub fn unlabeled_batch_size(&self) -> usize {
        (self.unlabeled_ratio * self.batch_size as f64).round() as usize
    }
}
