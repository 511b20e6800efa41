use serde::{Deserialize, Serialize};

use super::model::ModelParams;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    AdamW,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adamw" => Ok(OptimizerKind::AdamW),
            other => Err(Error::Input(format!("unknown optimizer `{other}`"))),
        }
    }
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::AdamW => "adamw",
        }
    }
}

/// Optimizer hyperparameters. Cheap to copy; each local update builds a
/// fresh [`OptimizerState`] from it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// Decoupled weight decay, AdamW only.
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            learning_rate,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn adamw(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::AdamW,
            ..Self::sgd(learning_rate)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be finite and nonnegative, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config("weight decay must be nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0
        {
            return Err(Error::Config("invalid AdamW moment parameters".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct OptimizerState {
    config: OptimizerConfig,
    step_count: u64,
    /// First and second moments, present iff the kind is AdamW.
    moments: Option<(ModelParams, ModelParams)>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, params: &ModelParams) -> Result<Self> {
        config.validate()?;
        let moments = match config.kind {
            OptimizerKind::Sgd => None,
            OptimizerKind::AdamW => Some((params.zeros_like(), params.zeros_like())),
        };
        Ok(OptimizerState {
            config,
            step_count: 0,
            moments,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn has_moments(&self) -> bool {
        self.moments.is_some()
    }
}

/// One optimizer step in place.
///
/// SGD: `W ← W − η g`. AdamW: bias-corrected Adam step with decoupled weight
/// decay `W ← W (1 − η λ_wd) − η m̂ / (sqrt(v̂) + ε)`.
pub fn apply_update(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut OptimizerState,
) -> Result<()> {
    params.check_shape(grads, "apply_update")?;
    if let Some((m, _)) = &state.moments {
        params.check_shape(m, "optimizer moments")?;
    }
    if !grads.is_finite() {
        return Err(Error::Numeric("non-finite gradient entry".into()));
    }
    let cfg = state.config;
    let lr = cfg.learning_rate;
    state.step_count += 1;
    match &mut state.moments {
        None => params.add_scaled(grads, -lr)?,
        Some((m, v)) => {
            let t = state.step_count as i32;
            let bc1 = 1.0 - cfg.beta1.powi(t);
            let bc2 = 1.0 - cfg.beta2.powi(t);
            m.for_each_pair_mut(grads, |m, g| *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g);
            v.for_each_pair_mut(grads, |v, g| *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g);
            let decay = 1.0 - lr * cfg.weight_decay;
            // Combine moments into a single step direction, then apply it.
            let mut step = m.clone();
            step.for_each_pair_mut(v, |s, v| *s = (*s / bc1) / ((v / bc2).sqrt() + cfg.eps));
            params.scale(decay);
            params.add_scaled(&step, -lr)?;
        }
    }
    if !params.is_finite() {
        return Err(Error::Numeric("update produced non-finite parameters".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ArchitectureSpec, DenseMatrix, Layer, ModelKind};

    fn scalar_model(w: f64) -> ModelParams {
        let spec = ArchitectureSpec::new(ModelKind::Mlp, 1)
            .with_hidden(&[])
            .with_classes(2);
        ModelParams::from_layers(
            spec,
            vec![Layer {
                weight: DenseMatrix::from_vec(1, 2, vec![w, 0.0]).unwrap(),
                bias: vec![0.0, 0.0],
            }],
        )
        .unwrap()
    }

    fn constant_grad(p: &ModelParams, g: f64) -> ModelParams {
        let mut out = p.zeros_like();
        for i in 0..out.num_params() {
            out.set_flat(i, g);
        }
        out
    }

    #[test]
    fn sgd_matches_direct_arithmetic() {
        let mut p = scalar_model(1.0);
        let g = constant_grad(&p, 0.5);
        let mut s = OptimizerState::new(OptimizerConfig::sgd(0.1), &p).unwrap();
        apply_update(&mut p, &g, &mut s).unwrap();
        assert!((p.get_flat(0) - 0.95).abs() < 1e-15);
        assert_eq!(s.step_count(), 1);
        assert!(!s.has_moments());
    }

    #[test]
    fn zero_learning_rate_leaves_params_unchanged() {
        for cfg in [OptimizerConfig::sgd(0.0), OptimizerConfig::adamw(0.0)] {
            let mut p = scalar_model(0.7);
            let before = p.to_bits();
            let g = constant_grad(&p, 3.0);
            let mut s = OptimizerState::new(cfg, &p).unwrap();
            apply_update(&mut p, &g, &mut s).unwrap();
            assert_eq!(p.to_bits(), before);
        }
    }

    #[test]
    fn two_sgd_steps_equal_one_summed_step() {
        let mut a = scalar_model(1.0);
        let mut b = scalar_model(1.0);
        let g = constant_grad(&a, 0.25);
        let mut sa = OptimizerState::new(OptimizerConfig::sgd(0.1), &a).unwrap();
        apply_update(&mut a, &g, &mut sa).unwrap();
        apply_update(&mut a, &g, &mut sa).unwrap();
        let mut g2 = g.clone();
        g2.scale(2.0);
        let mut sb = OptimizerState::new(OptimizerConfig::sgd(0.1), &b).unwrap();
        apply_update(&mut b, &g2, &mut sb).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn adamw_first_step_moves_by_learning_rate() {
        // With zero-initialized moments, the bias-corrected first step is g/|g|.
        let mut p = scalar_model(1.0);
        let g = constant_grad(&p, 0.5);
        let mut cfg = OptimizerConfig::adamw(0.01);
        cfg.weight_decay = 0.1;
        let mut s = OptimizerState::new(cfg, &p).unwrap();
        assert!(s.has_moments());
        apply_update(&mut p, &g, &mut s).unwrap();
        let expected = 1.0 * (1.0 - 0.01 * 0.1) - 0.01 * 0.5 / (0.5 + 1e-8);
        assert!((p.get_flat(0) - expected).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite_gradients_and_shape_mismatch() {
        let mut p = scalar_model(1.0);
        let mut g = p.zeros_like();
        g.set_flat(0, f64::NAN);
        let mut s = OptimizerState::new(OptimizerConfig::sgd(0.1), &p).unwrap();
        assert!(matches!(
            apply_update(&mut p, &g, &mut s),
            Err(Error::Numeric(_))
        ));
        let other = ModelParams::zeros(&ArchitectureSpec::new(ModelKind::Mlp, 3)).unwrap();
        assert!(apply_update(&mut p, &other, &mut s).is_err());
        assert!(OptimizerState::new(OptimizerConfig::sgd(-1.0), &p).is_err());
    }
}
