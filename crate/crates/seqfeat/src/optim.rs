//! Stochastic gradient descent and Adam over the autoencoder parameters.

use serde::{Deserialize, Serialize};

use crate::autoencoder::AutoencoderParams;
use crate::error::{Error, Result};

/// Optimizer choice for the training procedures.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    /// Plain SGD with a fixed step size.
    Sgd,
    /// Adam with bias correction.
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    /// Adam with its usual defaults (0.9, 0.999, 1e-8).
    pub fn adam_default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates plus the timestep, flat over the
/// parameter visit order.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        AdamState {
            t: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }
}

/// A ready-to-step optimizer bound to one parameter shape.
#[derive(Clone, Debug)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub alpha: f64,
    adam: Option<AdamState>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, alpha: f64, param_count: usize) -> Result<Self> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(Error::InvalidConfig(format!("step size must be >= 0, got {alpha}")));
        }
        let adam = match kind {
            OptimizerKind::Sgd => None,
            OptimizerKind::Adam { .. } => Some(AdamState::new(param_count)),
        };
        Ok(Optimizer { kind, alpha, adam })
    }

    /// Apply one update from the given gradients.
    pub fn step(&mut self, params: &mut AutoencoderParams, grads: &AutoencoderParams) -> Result<()> {
        match self.kind {
            OptimizerKind::Sgd => {
                let alpha = self.alpha;
                let g = grads.flatten();
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::TrainingDiverged("non-finite gradient".into()));
                }
                let mut i = 0;
                params.visit_mut(&mut |p| {
                    *p -= alpha * g[i];
                    i += 1;
                });
                Ok(())
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                let state = self.adam.as_mut().expect("adam state");
                adam_step(state, params, grads, self.alpha, beta1, beta2, epsilon)
            }
        }
    }
}

/// One Adam update with bias correction:
///
/// ```text
/// m <- b1 m + (1 - b1) g        mhat = m / (1 - b1^t)
/// v <- b2 v + (1 - b2) g^2      vhat = v / (1 - b2^t)
/// p <- p - alpha * mhat / (sqrt(vhat) + eps)
/// ```
pub fn adam_step(
    state: &mut AdamState,
    params: &mut AutoencoderParams,
    grads: &AutoencoderParams,
    alpha: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) -> Result<()> {
    let g = grads.flatten();
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::TrainingDiverged("non-finite gradient".into()));
    }
    if g.len() != state.m.len() {
        return Err(Error::InvalidInput(format!(
            "adam state sized for {} parameters, gradients have {}",
            state.m.len(),
            g.len()
        )));
    }
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    let mut i = 0;
    params.visit_mut(&mut |p| {
        let gi = g[i];
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        *m = beta1 * *m + (1.0 - beta1) * gi;
        *v = beta2 * *v + (1.0 - beta2) * gi * gi;
        let mhat = *m / bc1;
        let vhat = *v / bc2;
        *p -= alpha * mhat / (vhat.sqrt() + epsilon);
        i += 1;
    });
    Ok(())
}
