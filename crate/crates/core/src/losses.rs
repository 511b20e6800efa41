//! Scalar losses and their gradients with respect to logits.
//!
//! Batch terms are arithmetic means over samples. Probabilities inside
//! logarithms are clamped at [`PROB_EPS`].

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{DenseMatrix, ModelParams};

pub const PROB_EPS: f64 = 1e-12;

fn ln_clamped(p: f64) -> f64 {
    p.max(PROB_EPS).ln()
}

/// A probability distribution over classes.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(Error::Dimension("empty probability vector".into()));
        }
        if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Input("probabilities must lie in [0, 1]".into()));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Input(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(ProbVector(probabilities))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn softmax_into(logits: &[f64], temperature: f64, out: &mut [f64]) {
    let max = logits
        .iter()
        .map(|z| z / temperature)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, z) in out.iter_mut().zip(logits) {
        *o = (z / temperature - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Result<ProbVector> {
    softmax_with_temperature(logits, 1.0)
}

pub fn softmax_with_temperature(logits: &[f64], temperature: f64) -> Result<ProbVector> {
    if logits.is_empty() {
        return Err(Error::Dimension("softmax of an empty vector".into()));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::Numeric("non-finite logit".into()));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Input("temperature must be positive".into()));
    }
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, temperature, &mut out);
    Ok(ProbVector(out))
}

/// Row-wise softmax of a logit matrix.
pub fn softmax_rows(logits: &DenseMatrix, temperature: f64) -> Array2<f64> {
    let mut out = Array2::zeros(logits.shape());
    for r in 0..logits.rows() {
        let row = out.row_mut(r).into_slice().expect("standard layout");
        softmax_into(logits.row(r), temperature, row);
    }
    out
}

/// `−ln pred[label]` with the probability clamped at [`PROB_EPS`].
pub fn cross_entropy(pred: &ProbVector, label: usize) -> Result<f64> {
    let p = pred
        .as_slice()
        .get(label)
        .ok_or_else(|| Error::Input(format!("label {label} outside 0..{}", pred.len())))?;
    Ok(-ln_clamped(*p))
}

fn kl_slices(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&pi, &qi)| pi * (ln_clamped(pi) - ln_clamped(qi)))
        .sum()
}

/// `Σ p_i ln(p_i / q_i)` with both operands clamped.
pub fn kl_divergence(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Input(format!(
            "KL operands have dimensions {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(kl_slices(p.as_slice(), q.as_slice()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KdDirection {
    /// `KL(teacher ‖ student)`, the usual distillation objective.
    TeacherToStudent,
    /// `KL(student ‖ teacher)`.
    StudentToTeacher,
}

impl KdDirection {
    pub fn name(self) -> &'static str {
        match self {
            KdDirection::TeacherToStudent => "teacher_to_student",
            KdDirection::StudentToTeacher => "student_to_teacher",
        }
    }
}

impl std::str::FromStr for KdDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "teacher_to_student" => Ok(KdDirection::TeacherToStudent),
            "student_to_teacher" => Ok(KdDirection::StudentToTeacher),
            other => Err(Error::Input(format!("unknown KD direction `{other}`"))),
        }
    }
}

/// Which branches of the consistency term receive gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrGradient {
    Both,
    /// Clean predictions act as fixed targets.
    PerturbedOnly,
}

impl CrGradient {
    pub fn name(self) -> &'static str {
        match self {
            CrGradient::Both => "both",
            CrGradient::PerturbedOnly => "perturbed_only",
        }
    }
}

impl std::str::FromStr for CrGradient {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(CrGradient::Both),
            "perturbed_only" => Ok(CrGradient::PerturbedOnly),
            other => Err(Error::Input(format!("unknown CR gradient mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Consistency coefficient.
    pub lambda: f64,
    /// Distillation weight; cross-entropy gets `1 − alpha`.
    pub alpha: f64,
    pub l2_coeff: f64,
    pub kd_temperature: f64,
    pub kd_direction: KdDirection,
    pub cr_gradient: CrGradient,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: 0.3,
            alpha: 0.6,
            l2_coeff: 1e-5,
            kd_temperature: 1.0,
            kd_direction: KdDirection::TeacherToStudent,
            cr_gradient: CrGradient::Both,
        }
    }
}

impl LossConfig {
    /// Endpoints 0 and 1 are accepted for both coefficients so that ablations
    /// (no consistency, pure fine-tuning, pure distillation) can be expressed.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.l2_coeff >= 0.0 && self.l2_coeff.is_finite()) {
            return Err(Error::Config("l2 coefficient must be nonnegative".into()));
        }
        if !(self.kd_temperature > 0.0 && self.kd_temperature.is_finite()) {
            return Err(Error::Config("KD temperature must be positive".into()));
        }
        Ok(())
    }
}

/// Values of every loss term for one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce: f64,
    /// Already scaled by lambda.
    pub cr: f64,
    pub kd: f64,
    /// Already scaled by the L2 coefficient.
    pub reg: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn mean(items: &[LossBreakdown]) -> LossBreakdown {
        if items.is_empty() {
            return LossBreakdown::default();
        }
        let n = items.len() as f64;
        let sum = |f: fn(&LossBreakdown) -> f64| items.iter().map(f).sum::<f64>() / n;
        LossBreakdown {
            ce: sum(|b| b.ce),
            cr: sum(|b| b.cr),
            kd: sum(|b| b.kd),
            reg: sum(|b| b.reg),
            total: sum(|b| b.total),
        }
    }
}

fn check_same_shape(a: &DenseMatrix, b: &DenseMatrix, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Input(format!(
            "{what}: logit shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Mean cross-entropy and its gradient `(softmax − onehot) / n`.
pub fn cross_entropy_batch(logits: &DenseMatrix, labels: &[usize]) -> Result<(f64, DenseMatrix)> {
    if labels.len() != logits.rows() {
        return Err(Error::Input(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.rows()
        )));
    }
    let classes = logits.cols();
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Input(format!("label {bad} outside 0..{classes}")));
    }
    let n = labels.len() as f64;
    let mut grad = softmax_rows(logits, 1.0);
    let mut value = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        value -= ln_clamped(grad[[r, label]]);
        grad[[r, label]] -= 1.0;
    }
    grad.mapv_inplace(|g| g / n);
    Ok((value / n, DenseMatrix::from_array_unchecked(grad)))
}

/// Consistency term and its gradients with respect to both logit branches.
#[derive(Clone, Debug)]
pub struct CrTerm {
    pub value: f64,
    /// `None` when the clean branch is treated as a constant.
    pub clean_grad: Option<DenseMatrix>,
    pub perturbed_grad: Option<DenseMatrix>,
}

/// `λ · mean KL(softmax(clean) ‖ softmax(perturbed))`. Without unlabeled
/// logits the term is zero.
pub fn cr_loss(
    unlabeled: Option<(&DenseMatrix, &DenseMatrix)>,
    lambda: f64,
    gradient: CrGradient,
) -> Result<CrTerm> {
    let Some((clean, perturbed)) = unlabeled else {
        return Ok(CrTerm {
            value: 0.0,
            clean_grad: None,
            perturbed_grad: None,
        });
    };
    check_same_shape(clean, perturbed, "consistency")?;
    let n = clean.rows() as f64;
    let p = softmax_rows(clean, 1.0);
    let q = softmax_rows(perturbed, 1.0);
    let mut value = 0.0;
    let mut clean_grad = Array2::zeros(p.dim());
    let mut perturbed_grad = Array2::zeros(p.dim());
    let scale = lambda / n;
    for r in 0..p.nrows() {
        let (pr, qr) = (p.row(r), q.row(r));
        let kl = kl_slices(pr.as_slice().unwrap(), qr.as_slice().unwrap());
        value += kl;
        for j in 0..p.ncols() {
            let log_ratio = ln_clamped(pr[j]) - ln_clamped(qr[j]);
            clean_grad[[r, j]] = scale * pr[j] * (log_ratio - kl);
            perturbed_grad[[r, j]] = scale * (qr[j] - pr[j]);
        }
    }
    Ok(CrTerm {
        value: lambda * value / n,
        clean_grad: match gradient {
            CrGradient::Both => Some(DenseMatrix::from_array_unchecked(clean_grad)),
            CrGradient::PerturbedOnly => None,
        },
        perturbed_grad: Some(DenseMatrix::from_array_unchecked(perturbed_grad)),
    })
}

/// Mean distillation loss and its gradient with respect to the student
/// logits; the teacher (expert) logits are constants.
pub fn kd_loss(
    student: &DenseMatrix,
    teacher: &DenseMatrix,
    temperature: f64,
    direction: KdDirection,
) -> Result<(f64, DenseMatrix)> {
    check_same_shape(student, teacher, "distillation")?;
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Input("temperature must be positive".into()));
    }
    let n = student.rows() as f64;
    let s = softmax_rows(student, temperature);
    let t = softmax_rows(teacher, temperature);
    let mut grad = Array2::zeros(s.dim());
    let mut value = 0.0;
    let scale = 1.0 / (n * temperature);
    for r in 0..s.nrows() {
        let (sr, tr) = (s.row(r), t.row(r));
        match direction {
            KdDirection::TeacherToStudent => {
                value += kl_slices(tr.as_slice().unwrap(), sr.as_slice().unwrap());
                for j in 0..s.ncols() {
                    grad[[r, j]] = scale * (sr[j] - tr[j]);
                }
            }
            KdDirection::StudentToTeacher => {
                let kl = kl_slices(sr.as_slice().unwrap(), tr.as_slice().unwrap());
                value += kl;
                for j in 0..s.ncols() {
                    let log_ratio = ln_clamped(sr[j]) - ln_clamped(tr[j]);
                    grad[[r, j]] = scale * sr[j] * (log_ratio - kl);
                }
            }
        }
    }
    Ok((value / n, DenseMatrix::from_array_unchecked(grad)))
}

/// `coeff · Σ W²` over weights; biases are not penalized.
pub fn l2_reg(params: &ModelParams, coeff: f64) -> f64 {
    coeff
        * params
            .layers()
            .iter()
            .flat_map(|l| l.weight.values())
            .map(|w| w * w)
            .sum::<f64>()
}

pub fn l2_grad(params: &ModelParams, coeff: f64) -> ModelParams {
    let mut g = params.clone();
    for l in g.layers_mut() {
        l.bias.iter_mut().for_each(|b| *b = 0.0);
    }
    g.scale(2.0 * coeff);
    g
}

/// Logits entering a composite loss for one labeled/unlabeled batch pair.
#[derive(Clone, Copy, Debug)]
pub struct BatchLogits<'a> {
    pub labeled: &'a DenseMatrix,
    pub labels: &'a [usize],
    /// Clean and perturbed logits of the unlabeled batch, if any.
    pub unlabeled: Option<(&'a DenseMatrix, &'a DenseMatrix)>,
}

/// Gradients of a composite loss, split by the forward pass they flow into.
#[derive(Clone, Debug)]
pub struct LossGrads {
    pub labeled: DenseMatrix,
    pub clean: Option<DenseMatrix>,
    pub perturbed: Option<DenseMatrix>,
    /// Direct parameter gradient of the regularizer.
    pub reg: ModelParams,
}

/// `CE + CR + R`.
pub fn composite_step1_loss(
    batch: BatchLogits<'_>,
    params: &ModelParams,
    cfg: &LossConfig,
) -> Result<(LossBreakdown, LossGrads)> {
    composite(batch, None, params, cfg)
}

/// `(1 − α) CE + α KD + CR + R`, with `expert_logits` computed by the frozen
/// expert on the same labeled inputs.
pub fn composite_step2_loss(
    batch: BatchLogits<'_>,
    expert_logits: &DenseMatrix,
    params: &ModelParams,
    cfg: &LossConfig,
) -> Result<(LossBreakdown, LossGrads)> {
    composite(batch, Some(expert_logits), params, cfg)
}

fn composite(
    batch: BatchLogits<'_>,
    expert_logits: Option<&DenseMatrix>,
    params: &ModelParams,
    cfg: &LossConfig,
) -> Result<(LossBreakdown, LossGrads)> {
    if batch.labels.is_empty() {
        return Err(Error::Input("labeled batch is empty".into()));
    }
    let (ce, ce_grad) = cross_entropy_batch(batch.labeled, batch.labels)?;
    let cr = cr_loss(batch.unlabeled, cfg.lambda, cfg.cr_gradient)?;
    let reg = l2_reg(params, cfg.l2_coeff);
    let (kd, labeled_grad, total) = match expert_logits {
        None => (0.0, ce_grad, ce + cr.value + reg),
        Some(expert) => {
            let (kd, kd_grad) = kd_loss(batch.labeled, expert, cfg.kd_temperature, cfg.kd_direction)?;
            let a = cfg.alpha;
            let mut g = ce_grad.into_array();
            g.zip_mut_with(kd_grad.as_array(), |c, k| *c = (1.0 - a) * *c + a * k);
            let total = ((1.0 - a) * ce + a * kd) + cr.value + reg;
            (kd, DenseMatrix::from_array_unchecked(g), total)
        }
    };
    let breakdown = LossBreakdown {
        ce,
        cr: cr.value,
        kd,
        reg,
        total,
    };
    if ![ce, cr.value, kd, reg, total].iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite loss {breakdown:?}")));
    }
    Ok((
        breakdown,
        LossGrads {
            labeled: labeled_grad,
            clean: cr.clean_grad,
            perturbed: cr.perturbed_grad,
            reg: l2_grad(params, cfg.l2_coeff),
        },
    ))
}
