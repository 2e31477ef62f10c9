use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Hyper-parameters of one training job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub weight_decay: f64,
    /// Multiplicative learning-rate decay applied after every epoch.
    #[serde(default = "default_decay")]
    pub lr_decay: f64,
    /// Hard cap on optimizer steps across epochs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    /// Apply `lr_decay` every this many steps instead of once per epoch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay_every_steps: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_decay() -> f64 {
    1.0
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            learning_rate: 1e-3,
            epochs: 1,
            batch_size: 32,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            weight_decay: 0.0,
            lr_decay: default_decay(),
            max_steps: None,
            decay_every_steps: None,
            seed: 0,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| Error::Config {
            path: format!("train.{field}"),
            reason: reason.to_string(),
        };
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(bad("learning_rate", "must be positive"));
        }
        if self.epochs == 0 {
            return Err(bad("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(bad("batch_size", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(bad("beta", "must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) || self.weight_decay < 0.0 || !(self.lr_decay > 0.0) {
            return Err(bad(
                "eps",
                "eps and lr_decay must be positive, weight_decay non-negative",
            ));
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, base: f64, epoch: usize) -> f64 {
        base * self.lr_decay.powi(epoch as i32)
    }

    /// Learning rate for a step, honouring `decay_every_steps` when set.
    pub fn lr_for_step(&self, base: f64, epoch: usize, step: usize) -> f64 {
        match self.decay_every_steps {
            Some(n) if n > 0 => base * self.lr_decay.powi((step / n) as i32),
            _ => self.lr_at(base, epoch),
        }
    }

    pub fn with_seed(&self, seed: u64) -> TrainHyper {
        TrainHyper {
            seed,
            ..self.clone()
        }
    }
}

/// First/second moment buffers for one group of parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn for_params(params: &[&Tensor]) -> Self {
        AdamState {
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        }
    }
}

/// One bias-corrected Adam update at learning rate `lr`. Weight decay enters
/// as the gradient of an L2 penalty.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[&Tensor],
    state: &mut AdamState,
    hyper: &TrainHyper,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len()
    {
        return Err(Error::Dimension {
            context: "adam parameter groups",
            expected: vec![params.len()],
            actual: vec![grads.len(), state.m.len()],
        });
    }
    for (p, g) in params.iter().zip(grads) {
        p.same_shape(g, "adam gradient")?;
    }
    let next = state.step + 1;
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Training {
            step: next as usize,
            what: "non-finite gradient".into(),
        });
    }
    state.step = next;
    let (b1, b2) = (hyper.beta1, hyper.beta2);
    let c1 = 1.0 - b1.powi(next as i32);
    let c2 = 1.0 - b2.powi(next as i32);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for (j, (w, &gr)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            let gr = gr + hyper.weight_decay * *w;
            m[j] = b1 * m[j] + (1.0 - b1) * gr;
            v[j] = b2 * v[j] + (1.0 - b2) * gr * gr;
            let mhat = m[j] / c1;
            let vhat = v[j] / c2;
            *w -= lr * mhat / (vhat.sqrt() + hyper.eps);
        }
    }
    Ok(())
}
