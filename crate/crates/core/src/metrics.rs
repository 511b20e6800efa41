//! Binary classification metrics. Class 1 is the positive class.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

pub fn confusion(predicted: &[usize], labels: &[usize]) -> Result<ConfusionCounts> {
    if predicted.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} predictions for {} labels",
            predicted.len(),
            labels.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &y) in predicted.iter().zip(labels) {
        match (p, y) {
            (1, 1) => c.tp += 1,
            (0, 0) => c.tn += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.fn_ += 1,
            _ => return Err(Error::Input(format!("non-binary class pair ({p}, {y})"))),
        }
    }
    Ok(c)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1; every zero denominator yields 0.
pub fn precision_recall_f1(c: &ConfusionCounts) -> (f64, f64, f64) {
    let p = ratio(c.tp, c.tp + c.fp);
    let r = ratio(c.tp, c.tp + c.fn_);
    let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCurvePoint {
    /// Position of the threshold in the descending sweep over distinct scores.
    pub rank: usize,
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision/recall at every distinct score, swept from high to low. Tied
/// scores enter the positive set together.
pub fn pr_curve(scores: &[f64], labels: &[usize]) -> Result<Vec<PrCurvePoint>> {
    if scores.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::Input("labels must be binary".into()));
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 {
        return Err(Error::UndefinedMetric(
            "PR-AUC needs at least one positive label".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut curve = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            tp += labels[order[i]];
            seen += 1;
            i += 1;
        }
        curve.push(PrCurvePoint {
            rank: curve.len(),
            threshold,
            precision: tp as f64 / seen as f64,
            recall: tp as f64 / positives as f64,
        });
    }
    Ok(curve)
}

/// Average precision: `Σ_k (R_k − R_{k−1}) P_k` over the descending sweep.
pub fn pr_auc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    let curve = pr_curve(scores, labels)?;
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for point in curve {
        area += (point.recall - prev_recall) * point.precision;
        prev_recall = point.recall;
    }
    Ok(area.clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Zero when the evaluated set has no positives.
    pub pr_auc: f64,
    pub counts: ConfusionCounts,
}

impl MetricsReport {
    /// Scores are positive-class probabilities; predictions are supplied
    /// separately so callers control the decision rule.
    pub fn from_predictions(predicted: &[usize], scores: &[f64], labels: &[usize]) -> Result<Self> {
        let counts = confusion(predicted, labels)?;
        let (precision, recall, f1) = precision_recall_f1(&counts);
        let pr_auc = match pr_auc(scores, labels) {
            Ok(v) => v,
            Err(Error::UndefinedMetric(_)) => 0.0,
            Err(e) => return Err(e),
        };
        Ok(MetricsReport {
            precision,
            recall,
            f1,
            pr_auc,
            counts,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation (`n − 1` denominator, 0 for `n = 1`).
    /// Values are summed in sorted order so the result ignores input order.
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Input("no values to aggregate".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let std = if sorted.len() < 2 {
            0.0
        } else {
            let mut dev: Vec<f64> = sorted.iter().map(|v| (v - mean).powi(2)).collect();
            dev.sort_by(f64::total_cmp);
            (dev.iter().sum::<f64>() / (n - 1.0)).sqrt()
        };
        Ok(MeanStd { mean, std })
    }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean, self.std)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub runs: usize,
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
    pub pr_auc: MeanStd,
}

pub fn aggregate_runs(reports: &[MetricsReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::Input("no reports to aggregate".into()));
    }
    let col = |f: fn(&MetricsReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(AggregateReport {
        runs: reports.len(),
        precision: col(|r| r.precision)?,
        recall: col(|r| r.recall)?,
        f1: col(|r| r.f1)?,
        pr_auc: col(|r| r.pr_auc)?,
    })
}
