//! Whole-network weight-sharing baseline: one supernet spanning every block,
//! trained end to end on the task with uniform single-path sampling and rated
//! end to end.

use rand::Rng;

use crate::distill::{sample_path, SupernetBlock};
use crate::error::{Error, Result};
use crate::net::{minibatches, CellNet};
use crate::numkernel::{mse_with_grad, Tensor, TrainHyper};
use crate::rate::Metric;
use crate::rng::{derive_seed, rng_for, stream};
use crate::space::{Architecture, SearchSpace};
use crate::task::Dataset;

#[derive(Clone, Debug, PartialEq)]
pub struct WholeNetSupernet {
    pub blocks: Vec<SupernetBlock>,
}

impl WholeNetSupernet {
    pub fn init(space: &SearchSpace, seed: u64) -> Result<Self> {
        let seed = derive_seed(seed, &[stream::BASELINE]);
        let blocks = (0..space.blocks.len())
            .map(|k| SupernetBlock::init(space, k, seed))
            .collect::<Result<_>>()?;
        Ok(WholeNetSupernet { blocks })
    }

    pub fn extract(&self, arch: &Architecture) -> Result<Vec<CellNet>> {
        if arch.blocks.len() != self.blocks.len() {
            return Err(Error::Precondition(
                "architecture block count mismatch".into(),
            ));
        }
        self.blocks
            .iter()
            .zip(&arch.blocks)
            .map(|(b, a)| b.extract(a))
            .collect()
    }

    fn step(
        &mut self,
        arch: &Architecture,
        x: &Tensor,
        y: &Tensor,
        hyper: &TrainHyper,
        lr: f64,
    ) -> Result<f64> {
        let nets = self.extract(arch)?;
        let mut traces = Vec::with_capacity(nets.len());
        let mut h = x.clone();
        for n in &nets {
            let (out, t) = n.forward_traced(&h)?;
            traces.push(t);
            h = out;
        }
        let (loss, mut d) = mse_with_grad(y, &h)?;
        if !loss.is_finite() {
            return Err(Error::Training {
                step: 0,
                what: "non-finite loss in whole-net supernet".into(),
            });
        }
        for (k, (n, t)) in nets.iter().zip(&traces).enumerate().rev() {
            let (g, dx) = n.backward_traced(t, &d)?;
            self.blocks[k].apply_path_grads(&arch.blocks[k], &g, hyper, lr)?;
            d = dx;
        }
        Ok(loss)
    }

    /// Trains on `rows` of the task; returns per-epoch mean loss.
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        data: &Dataset,
        rows: &[usize],
        hyper: &TrainHyper,
        base_lr: f64,
        path_rng: &mut R,
    ) -> Result<Vec<f64>> {
        let mut batch_rng = rng_for(hyper.seed, &[stream::BASELINE, 1]);
        let max_steps = hyper.max_steps.unwrap_or(usize::MAX);
        let mut step = 0;
        let mut trace = Vec::new();
        for epoch in 0..hyper.epochs {
            if step >= max_steps {
                break;
            }
            let (mut total, mut count) = (0.0, 0);
            for batch in minibatches(rows, hyper.batch_size, &mut batch_rng) {
                if step >= max_steps {
                    break;
                }
                let lr = hyper.lr_for_step(base_lr, epoch, step);
                let arch = Architecture {
                    blocks: self
                        .blocks
                        .iter()
                        .map(|b| sample_path(&b.spec, path_rng))
                        .collect(),
                };
                step += 1;
                let loss = self
                    .step(
                        &arch,
                        &data.x.select_rows(&batch),
                        &data.y.select_rows(&batch),
                        hyper,
                        lr,
                    )
                    .map_err(|e| match e {
                        Error::Training { what, .. } => Error::Training { step, what },
                        other => other,
                    })?;
                total += loss * batch.len() as f64;
                count += batch.len();
            }
            trace.push(total / count.max(1) as f64);
        }
        Ok(trace)
    }

    /// End-to-end score of each architecture with inherited weights.
    pub fn rate(
        &self,
        archs: &[Architecture],
        x: &Tensor,
        y: &Tensor,
        metric: Metric,
    ) -> Result<Vec<f64>> {
        archs
            .iter()
            .map(|a| {
                let mut h = x.clone();
                for n in self.extract(a)? {
                    h = n.forward(&h)?;
                }
                metric.eval(y, &h)
            })
            .collect()
    }

    /// Frobenius norm of all parameters of each extracted subnet.
    pub fn subnet_frobenius_norms(&self, archs: &[Architecture]) -> Result<Vec<f64>> {
        archs
            .iter()
            .map(|a| {
                let nets = self.extract(a)?;
                let sq: f64 = nets
                    .iter()
                    .flat_map(|n| n.params())
                    .map(|t| t.data().iter().map(|v| v * v).sum::<f64>())
                    .sum();
                Ok(sq.sqrt())
            })
            .collect()
    }
}
