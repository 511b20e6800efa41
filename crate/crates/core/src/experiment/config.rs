use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{GeneratorConfig, Modality, PartitionMode};
use crate::error::{Error, Result};
use crate::fl::FedMobileConfig;
use crate::losses::{CrGradient, KdDirection};
use crate::nn::{Activation, ArchitectureSpec, ModelKind, OptimizerKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    FedMobile,
    Centralized,
    FedAvg,
    FedSemFt,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Centralized,
        Algorithm::FedMobile,
        Algorithm::FedSemFt,
        Algorithm::FedAvg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::FedMobile => "fedmobile",
            Algorithm::Centralized => "centralized",
            Algorithm::FedAvg => "fedavg",
            Algorithm::FedSemFt => "fedsem_ft",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fedmobile" => Ok(Algorithm::FedMobile),
            "centralized" => Ok(Algorithm::Centralized),
            "fedavg" => Ok(Algorithm::FedAvg),
            "fedsem_ft" => Ok(Algorithm::FedSemFt),
            _ => Err(Error::Input(format!("unknown algorithm `{s}`"))),
        }
    }
}

/// A complete, validated experiment description.
///
/// The model kind fixes the data modality: MLPs read feature vectors, GCNs read
/// trajectory graphs. Each run seed also seeds the data generator.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub generator: GeneratorConfig,
    pub fl: FedMobileConfig,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    pub central_epochs: usize,
    pub fedsem_threshold: f64,
    /// Fraction of each client's training data kept (learning-rate search).
    pub train_subsample: f64,
    /// Run seeds on the rayon pool.
    pub parallel_seeds: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let generator = GeneratorConfig::default();
        let model = ArchitectureSpec::new(ModelKind::Mlp, generator.input_dim());
        ExperimentConfig {
            algorithm: Algorithm::FedMobile,
            generator,
            fl: FedMobileConfig::new(model),
            seeds: vec![0, 1, 2, 3, 4],
            output: PathBuf::from("results"),
            central_epochs: 150,
            fedsem_threshold: 0.9,
            train_subsample: 1.0,
            parallel_seeds: false,
        }
    }
}

fn parse_err(key: &str, message: impl Display) -> Error {
    Error::Parse {
        key: key.to_string(),
        message: message.to_string(),
    }
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: Display,
{
    raw.parse::<T>()
        .map_err(|e| parse_err(key, format!("cannot parse `{raw}`: {e}")))
}

fn count(key: &str, raw: &str, min: usize) -> Result<usize> {
    let v: usize = value(key, raw)?;
    if v < min {
        return Err(parse_err(key, format!("must be >= {min}, got {v}")));
    }
    Ok(v)
}

fn real(key: &str, raw: &str, lo: f64, hi: f64) -> Result<f64> {
    let v: f64 = value(key, raw)?;
    if !(v.is_finite() && v >= lo && v <= hi) {
        return Err(parse_err(key, format!("must lie in [{lo}, {hi}], got {raw}")));
    }
    Ok(v)
}

fn list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| value(key, s))
        .collect()
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Every recognized key, in serialization order.
pub const KEYS: &[&str] = &[
    "algorithm",
    "model",
    "seeds",
    "output",
    "gen.num_clients",
    "gen.samples_per_client",
    "gen.labeled_fraction",
    "gen.prevalence",
    "gen.drift",
    "gen.rotation",
    "gen.partition",
    "gen.feature_dim",
    "gen.class_separation",
    "gen.num_places",
    "gen.trajectory_len",
    "gen.holdout_per_batch",
    "fl.expert_rounds",
    "fl.rounds_per_batch",
    "fl.stream_batches",
    "fl.local_epochs",
    "fl.batch_size",
    "fl.unlabeled_ratio",
    "fl.warm_start",
    "fl.concurrent",
    "fl.noise_sd",
    "fl.edge_flip_prob",
    "loss.lambda",
    "loss.alpha",
    "loss.l2",
    "loss.kd_temperature",
    "loss.kd_direction",
    "loss.cr_gradient",
    "opt.kind",
    "opt.lr",
    "opt.lr_step2",
    "opt.weight_decay",
    "model.hidden",
    "model.activation",
    "central.epochs",
    "fedsem.threshold",
    "train.subsample",
    "run.parallel_seeds",
];

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unset keys keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| parse_err(&format!("line {}", n + 1), "expected `key = value`"))?;
            cfg.set(key.trim(), raw.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one setting, checking the value's documented domain.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let g = &mut self.generator;
        let f = &mut self.fl;
        match key {
            "algorithm" => self.algorithm = value(key, raw)?,
            "model" => {
                let kind: ModelKind = value(key, raw)?;
                f.model.model_kind = kind;
                g.modality = match kind {
                    ModelKind::Mlp => Modality::Features,
                    ModelKind::Gcn => Modality::Graphs,
                };
            }
            "seeds" => {
                let seeds: Vec<u64> = list(key, raw)?;
                if seeds.is_empty() {
                    return Err(parse_err(key, "at least one seed required"));
                }
                self.seeds = seeds;
            }
            "output" => self.output = PathBuf::from(raw),
            "gen.num_clients" => g.num_clients = count(key, raw, 1)?,
            "gen.samples_per_client" => g.samples_per_client = count(key, raw, 1)?,
            "gen.labeled_fraction" => g.labeled_fraction = real(key, raw, 0.0, 1.0)?,
            "gen.prevalence" => g.prevalence = real(key, raw, 0.0, 1.0)?,
            "gen.drift" => g.drift = real(key, raw, 0.0, 100.0)?,
            "gen.rotation" => g.rotation = real(key, raw, -10.0, 10.0)?,
            "gen.partition" => g.partition = value::<PartitionMode>(key, raw)?,
            "gen.feature_dim" => g.feature_dim = count(key, raw, 2)?,
            "gen.class_separation" => g.class_separation = real(key, raw, 0.0, 100.0)?,
            "gen.num_places" => g.num_places = count(key, raw, 2)?,
            "gen.trajectory_len" => g.trajectory_len = count(key, raw, 2)?,
            "gen.holdout_per_batch" => g.holdout_per_batch = count(key, raw, 0)?,
            "fl.expert_rounds" => f.expert_rounds = count(key, raw, 0)?,
            "fl.rounds_per_batch" => f.rounds_per_batch = count(key, raw, 0)?,
            "fl.stream_batches" => f.stream_batches = count(key, raw, 0)?,
            "fl.local_epochs" => f.local_epochs = count(key, raw, 1)?,
            "fl.batch_size" => f.batch_size = count(key, raw, 1)?,
            "fl.unlabeled_ratio" => f.unlabeled_ratio = real(key, raw, 0.0, 100.0)?,
            "fl.warm_start" => f.warm_start = value(key, raw)?,
            "fl.concurrent" => f.concurrent = value(key, raw)?,
            "fl.noise_sd" => f.perturbation.noise_sd = real(key, raw, 0.0, 100.0)?,
            "fl.edge_flip_prob" => f.perturbation.edge_flip_prob = real(key, raw, 0.0, 1.0)?,
            "loss.lambda" => f.loss.lambda = real(key, raw, 0.0, 1.0)?,
            "loss.alpha" => f.loss.alpha = real(key, raw, 0.0, 1.0)?,
            "loss.l2" => f.loss.l2_coeff = real(key, raw, 0.0, 1.0)?,
            "loss.kd_temperature" => f.loss.kd_temperature = real(key, raw, 1e-3, 100.0)?,
            "loss.kd_direction" => f.loss.kd_direction = value::<KdDirection>(key, raw)?,
            "loss.cr_gradient" => f.loss.cr_gradient = value::<CrGradient>(key, raw)?,
            "opt.kind" => {
                let kind: OptimizerKind = value(key, raw)?;
                f.optimizer.kind = kind;
                f.optimizer_step2.kind = kind;
            }
            "opt.lr" => f.optimizer.learning_rate = real(key, raw, 0.0, 10.0)?,
            "opt.lr_step2" => f.optimizer_step2.learning_rate = real(key, raw, 0.0, 10.0)?,
            "opt.weight_decay" => {
                let wd = real(key, raw, 0.0, 1.0)?;
                f.optimizer.weight_decay = wd;
                f.optimizer_step2.weight_decay = wd;
            }
            "model.hidden" => {
                let hidden: Vec<usize> = list(key, raw)?;
                if hidden.iter().any(|&h| h == 0) {
                    return Err(parse_err(key, "hidden widths must be >= 1"));
                }
                f.model.hidden_dims = hidden;
            }
            "model.activation" => f.model.activation = value::<Activation>(key, raw)?,
            "central.epochs" => self.central_epochs = count(key, raw, 1)?,
            "fedsem.threshold" => {
                let t: f64 = value(key, raw)?;
                if !(t > 0.5 && t <= 1.0) {
                    return Err(parse_err(key, format!("must lie in (0.5, 1], got {raw}")));
                }
                self.fedsem_threshold = t;
            }
            "train.subsample" => {
                let s: f64 = value(key, raw)?;
                if !(s > 0.0 && s <= 1.0) {
                    return Err(parse_err(key, format!("must lie in (0, 1], got {raw}")));
                }
                self.train_subsample = s;
            }
            "run.parallel_seeds" => self.parallel_seeds = value(key, raw)?,
            _ => return Err(parse_err(key, "unknown key")),
        }
        self.fl.model.input_dim = self.generator.input_dim();
        Ok(())
    }

    /// Current value of a key in the same text form `set` accepts.
    pub fn get(&self, key: &str) -> Result<String> {
        let g = &self.generator;
        let f = &self.fl;
        Ok(match key {
            "algorithm" => self.algorithm.name().into(),
            "model" => f.model.model_kind.name().into(),
            "seeds" => join(&self.seeds),
            "output" => self.output.display().to_string(),
            "gen.num_clients" => g.num_clients.to_string(),
            "gen.samples_per_client" => g.samples_per_client.to_string(),
            "gen.labeled_fraction" => g.labeled_fraction.to_string(),
            "gen.prevalence" => g.prevalence.to_string(),
            "gen.drift" => g.drift.to_string(),
            "gen.rotation" => g.rotation.to_string(),
            "gen.partition" => g.partition.name(),
            "gen.feature_dim" => g.feature_dim.to_string(),
            "gen.class_separation" => g.class_separation.to_string(),
            "gen.num_places" => g.num_places.to_string(),
            "gen.trajectory_len" => g.trajectory_len.to_string(),
            "gen.holdout_per_batch" => g.holdout_per_batch.to_string(),
            "fl.expert_rounds" => f.expert_rounds.to_string(),
            "fl.rounds_per_batch" => f.rounds_per_batch.to_string(),
            "fl.stream_batches" => f.stream_batches.to_string(),
            "fl.local_epochs" => f.local_epochs.to_string(),
            "fl.batch_size" => f.batch_size.to_string(),
            "fl.unlabeled_ratio" => f.unlabeled_ratio.to_string(),
            "fl.warm_start" => f.warm_start.to_string(),
            "fl.concurrent" => f.concurrent.to_string(),
            "fl.noise_sd" => f.perturbation.noise_sd.to_string(),
            "fl.edge_flip_prob" => f.perturbation.edge_flip_prob.to_string(),
            "loss.lambda" => f.loss.lambda.to_string(),
            "loss.alpha" => f.loss.alpha.to_string(),
            "loss.l2" => f.loss.l2_coeff.to_string(),
            "loss.kd_temperature" => f.loss.kd_temperature.to_string(),
            "loss.kd_direction" => f.loss.kd_direction.name().into(),
            "loss.cr_gradient" => f.loss.cr_gradient.name().into(),
            "opt.kind" => f.optimizer.kind.name().into(),
            "opt.lr" => f.optimizer.learning_rate.to_string(),
            "opt.lr_step2" => f.optimizer_step2.learning_rate.to_string(),
            "opt.weight_decay" => f.optimizer.weight_decay.to_string(),
            "model.hidden" => join(&f.model.hidden_dims),
            "model.activation" => f.model.activation.name().into(),
            "central.epochs" => self.central_epochs.to_string(),
            "fedsem.threshold" => self.fedsem_threshold.to_string(),
            "train.subsample" => self.train_subsample.to_string(),
            "run.parallel_seeds" => self.parallel_seeds.to_string(),
            _ => return Err(parse_err(key, "unknown key")),
        })
    }

    /// Writes every key; the output parses back to an equal config.
    pub fn serialize(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("known key")))
            .collect()
    }

    /// Applies `key=value` overrides in order, then revalidates.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| parse_err(o, "override must be key=value"))?;
            self.set(k.trim(), v.trim())?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(parse_err("seeds", "at least one seed required"));
        }
        self.generator
            .validate()
            .map_err(|e| parse_err("gen", e))?;
        self.fl.validate().map_err(|e| parse_err("fl", e))?;
        if self.fl.model.input_dim != self.generator.input_dim() {
            return Err(parse_err("model", "input width does not match the data"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.fl.batch_size, 256);
        assert_eq!(cfg.fl.model.hidden_dims, vec![128, 128]);
        assert_eq!(cfg.fl.model.num_layers(), 3);
        assert_eq!(cfg.fl.total_rounds(), 120);
        assert_eq!((cfg.fl.loss.lambda, cfg.fl.loss.alpha), (0.3, 0.6));
    }

    #[test]
    fn out_of_range_lambda_names_the_key() {
        match ExperimentConfig::parse("loss.lambda = 1.5") {
            Err(Error::Parse { key, message }) => {
                assert_eq!(key, "loss.lambda");
                assert!(message.contains("[0, 1]"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_and_bad_lines_fail() {
        assert!(ExperimentConfig::parse("gen.colour = red").is_err());
        assert!(ExperimentConfig::parse("no equals sign").is_err());
        assert!(ExperimentConfig::parse("fedsem.threshold = 0.5").is_err());
        assert!(ExperimentConfig::parse("seeds = ").is_err());
    }

    #[test]
    fn serialization_round_trips() {
        let text = "algorithm = fedsem_ft\nmodel = gcn\nseeds = 3,9\nloss.alpha = 0.35\n\
                    opt.lr = 0.0001 # comment\ngen.partition = dirichlet:0.2\nmodel.hidden = 16\n\
                    gen.rotation = -0.1";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.generator.modality, Modality::Graphs);
        assert_eq!(cfg.fl.model.input_dim, cfg.generator.num_places + 1);
        let again = ExperimentConfig::parse(&cfg.serialize()).unwrap();
        assert_eq!(again, cfg);
        let d = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&d.serialize()).unwrap(), d);
    }

    #[test]
    fn overrides_apply_in_order() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_overrides(&["fl.batch_size=32", "fl.batch_size = 64"]).unwrap();
        assert_eq!(cfg.fl.batch_size, 64);
        assert!(cfg.apply_overrides(&["fl.batch_size"]).is_err());
    }
}
