use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::runner::{run_seeds, SeedRun};
use crate::error::{Error, Result};
use crate::metrics::{aggregate_runs, AggregateReport, MeanStd};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    Lambda,
    Alpha,
    /// Both step learning rates at once.
    LearningRate,
    BatchSize,
    LocalEpochs,
    LrStep1,
    LrStep2,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::Alpha => "alpha",
            SweepParam::LearningRate => "learning_rate",
            SweepParam::BatchSize => "batch_size",
            SweepParam::LocalEpochs => "local_epochs",
            SweepParam::LrStep1 => "lr_step1",
            SweepParam::LrStep2 => "lr_step2",
        }
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            SweepParam::Lambda => &["loss.lambda"],
            SweepParam::Alpha => &["loss.alpha"],
            SweepParam::LearningRate => &["opt.lr", "opt.lr_step2"],
            SweepParam::BatchSize => &["fl.batch_size"],
            SweepParam::LocalEpochs => &["fl.local_epochs"],
            SweepParam::LrStep1 => &["opt.lr"],
            SweepParam::LrStep2 => &["opt.lr_step2"],
        }
    }

    fn is_integer(self) -> bool {
        matches!(self, SweepParam::BatchSize | SweepParam::LocalEpochs)
    }

    fn is_learning_rate(self) -> bool {
        matches!(
            self,
            SweepParam::LearningRate | SweepParam::LrStep1 | SweepParam::LrStep2
        )
    }
}

impl FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "lambda" => SweepParam::Lambda,
            "alpha" => SweepParam::Alpha,
            "learning_rate" => SweepParam::LearningRate,
            "batch_size" => SweepParam::BatchSize,
            "local_epochs" => SweepParam::LocalEpochs,
            "lr_step1" => SweepParam::LrStep1,
            "lr_step2" => SweepParam::LrStep2,
            _ => return Err(Error::Input(format!("unknown sweep parameter `{s}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub grid: Vec<f64>,
}

/// Aggregates for one grid value.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub value: f64,
    pub test: AggregateReport,
    pub best_val_test: AggregateReport,
    pub validation: AggregateReport,
    pub retention: AggregateReport,
    pub runs: Vec<SeedRun>,
}

fn format_value(param: SweepParam, v: f64) -> String {
    if param.is_integer() {
        format!("{}", v as i64)
    } else {
        v.to_string()
    }
}

impl SweepSpec {
    /// Config for one grid value, validated through the config key domains.
    pub fn configure(&self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        if self.param.is_integer() && value.fract() != 0.0 {
            return Err(Error::Config(format!(
                "{} grid values must be integers, got {value}",
                self.param.name()
            )));
        }
        let mut cfg = base.clone();
        for key in self.param.keys() {
            cfg.set(key, &format_value(self.param, value))?;
        }
        if self.param.is_learning_rate() && cfg.train_subsample == 1.0 {
            cfg.train_subsample = 0.3;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Runs the base experiment at every grid value. Learning-rate sweeps train
/// on a 30% subsample of each client's data unless a subsample is already set.
pub fn sweep_hyperparams(base: &ExperimentConfig, spec: &SweepSpec) -> Result<Vec<SweepPoint>> {
    if spec.grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let configs: Vec<ExperimentConfig> = spec
        .grid
        .iter()
        .map(|&v| spec.configure(base, v))
        .collect::<Result<_>>()?;
    spec.grid
        .iter()
        .zip(configs)
        .map(|(&value, cfg)| {
            let runs = run_seeds(&cfg)?;
            let pick = |f: fn(&SeedRun) -> crate::metrics::MetricsReport| {
                aggregate_runs(&runs.iter().map(f).collect::<Vec<_>>())
            };
            Ok(SweepPoint {
                value,
                test: pick(|r| r.final_test)?,
                best_val_test: pick(|r| r.best_val_test)?,
                validation: pick(|r| r.final_validation)?,
                retention: pick(|r| r.retention)?,
                runs,
            })
        })
        .collect()
}

/// Index of the point with the highest mean validation F1 (first on ties).
pub fn select_by_validation(points: &[SweepPoint]) -> Option<usize> {
    argmax_by(points, |p| p.validation.f1.mean)
}

/// Index of the point with the highest mean test F1 (first on ties).
pub fn select_by_test(points: &[SweepPoint]) -> Option<usize> {
    argmax_by(points, |p| p.test.f1.mean)
}

fn argmax_by(points: &[SweepPoint], key: impl Fn(&SweepPoint) -> f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let k = key(p);
        if best.is_none_or(|(_, b)| k > b) {
            best = Some((i, k));
        }
    }
    best.map(|(i, _)| i)
}

fn ms(m: &MeanStd) -> String {
    format!("{},{}", m.mean, m.std)
}

pub const SWEEP_HEADER: &str = "param,value,runs,test_f1_mean,test_f1_std,test_pr_auc_mean,\
test_pr_auc_std,val_f1_mean,val_f1_std,best_val_test_f1_mean,best_val_test_f1_std,\
retention_f1_mean,retention_f1_std";

pub fn format_sweep(param: SweepParam, points: &[SweepPoint]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            param.name(),
            format_value(param, p.value),
            p.test.runs,
            ms(&p.test.f1),
            ms(&p.test.pr_auc),
            ms(&p.validation.f1),
            ms(&p.best_val_test.f1),
            ms(&p.retention.f1)
        ));
    }
    out
}
