//! First-order optimizers over a flat parameter vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Plain gradient descent.
    Sgd,
    /// Adam with bias-corrected moment estimates.
    #[default]
    AdaptiveMoments,
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, n_params: usize) -> Result<Self> {
        if !(learning_rate.is_finite() && learning_rate > 0.0) {
            return Err(Error::input(format!("learning rate must be > 0, got {learning_rate}")));
        }
        let moments = if kind == OptimizerKind::AdaptiveMoments { n_params } else { 0 };
        Ok(Optimizer {
            kind,
            learning_rate,
            first: vec![0.0; moments],
            second: vec![0.0; moments],
            steps: 0,
        })
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    /// Applies one descent step to `params` in place. Fails, leaving `params`
    /// untouched, if the update would produce a non-finite parameter.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        assert_eq!(params.len(), grad.len(), "gradient/parameter length mismatch");
        let update: Vec<f64> = match self.kind {
            OptimizerKind::Sgd => grad.iter().map(|g| self.learning_rate * g).collect(),
            OptimizerKind::AdaptiveMoments => {
                assert_eq!(self.first.len(), params.len(), "optimizer sized for another model");
                self.steps += 1;
                let t = self.steps as i32;
                let c1 = 1.0 - ADAM_BETA1.powi(t);
                let c2 = 1.0 - ADAM_BETA2.powi(t);
                grad.iter()
                    .zip(self.first.iter_mut().zip(self.second.iter_mut()))
                    .map(|(&g, (m, v))| {
                        *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                        *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                        let m_hat = *m / c1;
                        let v_hat = *v / c2;
                        self.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPSILON)
                    })
                    .collect()
            }
        };
        if params.iter().zip(&update).any(|(p, u)| !(p - u).is_finite()) {
            return Err(Error::domain("optimizer step produced a non-finite parameter"));
        }
        for (p, u) in params.iter_mut().zip(update) {
            *p -= u;
        }
        Ok(())
    }
}
