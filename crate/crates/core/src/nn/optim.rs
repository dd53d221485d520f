use serde::{Deserialize, Serialize};

use super::ParamVector;
use crate::error::{Error, Result};
use crate::rng::Seed;

/// Per-stage learning rates and minibatch schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Rate for level regression.
    pub learning_rate_a: f64,
    /// Rate for preference learning.
    pub learning_rate_b: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: Seed,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate_a: 0.01,
            learning_rate_b: 0.001,
            epochs: 150,
            batch_size: 8,
            seed: Seed(0),
        }
    }
}

impl TrainConfig {
    /// Learning rates may be zero (a no-op stage) but not negative.
    pub fn validate(&self) -> Result<()> {
        let rates_ok = [self.learning_rate_a, self.learning_rate_b]
            .iter()
            .all(|r| r.is_finite() && *r >= 0.0);
        if !rates_ok {
            return Err(Error::Config(format!(
                "learning rates must be finite and non-negative, got {} / {}",
                self.learning_rate_a, self.learning_rate_b
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// `params - learning_rate * gradient`, elementwise.
pub fn sgd_step(params: &ParamVector, gradient: &ParamVector, learning_rate: f64) -> Result<ParamVector> {
    let mut out = params.clone();
    Sgd { learning_rate }.step(&mut out, gradient)?;
    Ok(out)
}

/// Seam for first-order update rules. Only plain SGD ships.
pub trait Optimizer {
    fn step(&mut self, params: &mut ParamVector, gradient: &ParamVector) -> Result<()>;
}

#[derive(Debug, Clone, Copy)]
pub struct Sgd {
    pub learning_rate: f64,
}

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut ParamVector, gradient: &ParamVector) -> Result<()> {
        if !params.same_layout(gradient) {
            return Err(Error::Dimension {
                context: "gradient layout",
                expected: params.len(),
                actual: gradient.len(),
            });
        }
        if let Some(layer) = gradient.first_non_finite() {
            return Err(Error::NonFiniteGradient {
                layer: layer.to_string(),
            });
        }
        params.add_scaled(-self.learning_rate, gradient);
        if let Some(layer) = params.first_non_finite() {
            return Err(Error::NonFiniteGradient {
                layer: layer.to_string(),
            });
        }
        Ok(())
    }
}
