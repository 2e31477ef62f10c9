//! Synthetic regression task: Gaussian inputs mapped through a hidden random
//! tanh network that is wider and deeper than any student.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{Activation, Linear, Tensor};
use crate::rng::{rng_for, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub rows: usize,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    pub oracle_width: usize,
    pub oracle_depth: usize,
    /// Weight scale of the hidden network; larger means more nonlinear.
    #[serde(default = "default_gain")]
    pub oracle_gain: f64,
    #[serde(default)]
    pub noise: f64,
}

fn default_val_fraction() -> f64 {
    0.2
}

fn default_gain() -> f64 {
    2.0
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| Error::Config {
            path: format!("task.{field}"),
            reason: reason.into(),
        };
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(bad("input_dim", "dimensions must be positive"));
        }
        if self.rows < 10 {
            return Err(bad("rows", "need at least 10 rows"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(bad("val_fraction", "must lie in (0, 1)"));
        }
        if self.oracle_width == 0 || self.oracle_depth == 0 {
            return Err(bad("oracle_width", "hidden network must be non-empty"));
        }
        if self.noise < 0.0 {
            return Err(bad("noise", "must be non-negative"));
        }
        Ok(())
    }
}

/// Inputs, targets and a fixed train/validation split of row indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Tensor,
    pub y: Tensor,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

impl Dataset {
    pub fn generate(cfg: &TaskConfig, seed: u64) -> Result<Dataset> {
        cfg.validate()?;
        let mut rng = rng_for(seed, &[stream::TASK]);
        let mut layers = Vec::with_capacity(cfg.oracle_depth + 1);
        let mut width = cfg.input_dim;
        for _ in 0..cfg.oracle_depth {
            layers.push(Linear::init(
                width,
                cfg.oracle_width,
                cfg.oracle_gain,
                &mut rng,
            ));
            width = cfg.oracle_width;
        }
        let head = Linear::init(width, cfg.output_dim, 1.0, &mut rng);

        let x = Tensor::randn(&[cfg.rows, cfg.input_dim], 1.0, &mut rng);
        let mut h = x.clone();
        for l in &layers {
            let mut z = l.forward(&h)?;
            let shift = Tensor::randn(&[z.cols()], 0.5, &mut rng);
            z.add_row_bias(&shift)?;
            h = z.map(|v| Activation::Tanh.apply(v));
        }
        let mut y = head.forward(&h)?;
        standardize_columns(&mut y);
        if cfg.noise > 0.0 {
            let eps = Tensor::randn(y.shape(), cfg.noise, &mut rng);
            for (v, e) in y.data_mut().iter_mut().zip(eps.data()) {
                *v += e;
            }
        }

        let mut split_rng = rng_for(seed, &[stream::SPLIT]);
        let mut order: Vec<usize> = (0..cfg.rows).collect();
        order.shuffle(&mut split_rng);
        let n_val = ((cfg.rows as f64) * cfg.val_fraction).round() as usize;
        let n_val = n_val.clamp(1, cfg.rows - 1);
        let mut val = order[..n_val].to_vec();
        let mut train = order[n_val..].to_vec();
        val.sort_unstable();
        train.sort_unstable();
        Ok(Dataset { x, y, train, val })
    }

    pub fn rows(&self) -> usize {
        self.x.rows()
    }

    /// Copy whose training rows are a seeded subsample of `fraction`.
    pub fn with_train_fraction(&self, fraction: f64, seed: u64) -> Result<Dataset> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Precondition(format!(
                "fraction {fraction} not in (0, 1]"
            )));
        }
        let mut out = self.clone();
        if fraction < 1.0 {
            let keep = ((self.train.len() as f64 * fraction).round() as usize).max(1);
            let mut rng = rng_for(seed, &[stream::SUBSAMPLE]);
            let mut t = self.train.clone();
            t.shuffle(&mut rng);
            t.truncate(keep);
            t.sort_unstable();
            out.train = t;
        }
        Ok(out)
    }
}

fn standardize_columns(y: &mut Tensor) {
    let (n, c) = (y.rows(), y.cols());
    for j in 0..c {
        let mean = (0..n).map(|i| y.data()[i * c + j]).sum::<f64>() / n as f64;
        let var = (0..n)
            .map(|i| (y.data()[i * c + j] - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for i in 0..n {
            let v = &mut y.data_mut()[i * c + j];
            *v = (*v - mean) / sd;
        }
    }
}
