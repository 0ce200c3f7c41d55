use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ParameterVector;

/// How weight decay enters the update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightDecayMode {
    /// L2 penalty added to the gradient before the moment updates.
    #[default]
    Coupled,
    /// Parameters shrink directly by `lr * weight_decay` (AdamW).
    Decoupled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    #[serde(default)]
    pub weight_decay_mode: WeightDecayMode,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-5,
            weight_decay_mode: WeightDecayMode::Coupled,
        }
    }
}

impl AdamHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::config(format!("optimizer.{field} {why}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be a positive finite number");
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad("beta1", "must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return bad("beta2", "must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon", "must be a positive finite number");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay", "must be a non-negative finite number");
        }
        Ok(())
    }
}

/// Adam moments and step counter for one parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
    hyper: AdamHyper,
}

impl OptimizerState {
    pub fn new(num_params: usize, hyper: AdamHyper) -> Self {
        OptimizerState {
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            step_count: 0,
            hyper,
        }
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn hyper(&self) -> &AdamHyper {
        &self.hyper
    }

    /// One bias-corrected Adam update, in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.first_moment.len() || grad.len() != params.len() {
            return Err(Error::config(format!(
                "adam shape mismatch: state {}, params {}, grad {}",
                self.first_moment.len(),
                params.len(),
                grad.len()
            )));
        }
        let h = self.hyper;
        self.step_count += 1;
        let t = i32::try_from(self.step_count).unwrap_or(i32::MAX);
        let bc1 = 1.0 - h.beta1.powi(t);
        let bc2 = 1.0 - h.beta2.powi(t);
        // p -= (lr / bc1) * m / (sqrt(v) / sqrt(bc2) + eps)
        let step_size = h.learning_rate / bc1;
        let inv_sqrt_bc2 = 1.0 / bc2.sqrt();
        let (b1, b2) = (h.beta1, h.beta2);
        let (c1, c2) = (1.0 - b1, 1.0 - b2);
        let (coupled, shrink) = match h.weight_decay_mode {
            WeightDecayMode::Coupled => (h.weight_decay, 1.0),
            WeightDecayMode::Decoupled => (0.0, 1.0 - h.learning_rate * h.weight_decay),
        };
        let eps = h.epsilon;
        let iter = params
            .iter_mut()
            .zip(grad)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()));
        for ((p, &g), (m, v)) in iter {
            let g = g + coupled * *p;
            *m = b1 * *m + c1 * g;
            *v = b2 * *v + c2 * (g * g);
            *p = *p * shrink - step_size * *m / (v.sqrt() * inv_sqrt_bc2 + eps);
        }
        Ok(())
    }
}

/// Value-returning wrapper around [`OptimizerState::step`].
pub fn adam_step(
    state: &OptimizerState,
    params: &ParameterVector,
    grad: &ParameterVector,
) -> Result<(ParameterVector, OptimizerState)> {
    if params.layout() != grad.layout() {
        return Err(Error::config("gradient layout differs from parameter layout"));
    }
    let mut next_state = state.clone();
    let mut next = params.clone();
    next_state.step(next.values_mut(), grad.values())?;
    if !next.is_finite() {
        return Err(Error::Numeric("adam produced non-finite parameters".into()));
    }
    Ok((next, next_state))
}
