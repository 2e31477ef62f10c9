//! Concrete networks built from the op family: a cell (adapter, op stack,
//! adapter) and a chain of cells spanning several blocks.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{
    adam_step, mse, mse_with_grad, AdamState, Linear, LinearGrads, OpGrads, OpParams, OpTrace,
    Tensor, TrainHyper,
};
use crate::space::{Architecture, OpDescriptor, SearchSpace};

/// Structure of one cell instance: width plus one op per layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellShape {
    pub width: usize,
    pub ops: Vec<OpDescriptor>,
}

/// Input adapter, a stack of same-width ops, output adapter.
#[derive(Clone, Debug, PartialEq)]
pub struct CellNet {
    pub input_adapter: Linear,
    pub layers: Vec<OpParams>,
    pub output_adapter: Linear,
}

pub(crate) struct CellTrace {
    inputs: Vec<Tensor>,
    traces: Vec<OpTrace>,
    adapter_in: Tensor,
    last: Tensor,
}

pub struct CellGrads {
    pub input_adapter: LinearGrads,
    pub layers: Vec<OpGrads>,
    pub output_adapter: LinearGrads,
}

impl CellGrads {
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = self.input_adapter.tensors();
        for l in &self.layers {
            out.extend(l.tensors());
        }
        out.extend(self.output_adapter.tensors());
        out
    }
}

impl CellNet {
    pub fn init<R: Rng + ?Sized>(
        input: usize,
        shape: &CellShape,
        output: usize,
        rng: &mut R,
    ) -> Self {
        let input_adapter = Linear::init(input, shape.width, 1.0, rng);
        let layers = shape
            .ops
            .iter()
            .map(|d| d.instantiate(shape.width, shape.width, rng))
            .collect();
        let output_adapter = Linear::init(shape.width, output, 1.0, rng);
        CellNet {
            input_adapter,
            layers,
            output_adapter,
        }
    }

    pub fn input_width(&self) -> usize {
        self.input_adapter.input_width()
    }

    pub fn output_width(&self) -> usize {
        self.output_adapter.output_width()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = self.input_adapter.forward(x)?;
        for op in &self.layers {
            h = crate::numkernel::op_forward(op, &h)?;
        }
        self.output_adapter.forward(&h)
    }

    pub(crate) fn forward_traced(&self, x: &Tensor) -> Result<(Tensor, CellTrace)> {
        let adapter_in = x.clone();
        let mut h = self.input_adapter.forward(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut traces = Vec::with_capacity(self.layers.len());
        for op in &self.layers {
            let (y, t) = op.forward_traced(&h)?;
            inputs.push(h);
            traces.push(t);
            h = y;
        }
        let out = self.output_adapter.forward(&h)?;
        Ok((
            out,
            CellTrace {
                inputs,
                traces,
                adapter_in,
                last: h,
            },
        ))
    }

    pub(crate) fn backward_traced(
        &self,
        trace: &CellTrace,
        dy: &Tensor,
    ) -> Result<(CellGrads, Tensor)> {
        let (output_adapter, mut d) = self.output_adapter.backward(&trace.last, dy)?;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, op) in self.layers.iter().enumerate().rev() {
            let (g, dx) = op.backward_traced(&trace.inputs[i], &trace.traces[i], &d)?;
            layers.push(g);
            d = dx;
        }
        layers.reverse();
        let (input_adapter, dx) = self.input_adapter.backward(&trace.adapter_in, &d)?;
        Ok((
            CellGrads {
                input_adapter,
                layers,
                output_adapter,
            },
            dx,
        ))
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = self.input_adapter.params();
        for l in &self.layers {
            out.extend(l.params());
        }
        out.extend(self.output_adapter.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.input_adapter.params_mut();
        for l in &mut self.layers {
            out.extend(l.params_mut());
        }
        out.extend(self.output_adapter.params_mut());
        out
    }

    pub fn param_count(&self) -> u64 {
        self.params().iter().map(|t| t.len() as u64).sum()
    }

    pub fn mac_count(&self) -> u64 {
        self.input_adapter.mac_count()
            + self.layers.iter().map(OpParams::mac_count).sum::<u64>()
            + self.output_adapter.mac_count()
    }
}

/// A feed-forward chain of cells, one per block.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainNet {
    pub cells: Vec<CellNet>,
}

impl ChainNet {
    /// `widths` holds the block boundary widths (`blocks + 1` entries).
    pub fn init<R: Rng + ?Sized>(
        widths: &[usize],
        shapes: &[CellShape],
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() != shapes.len() + 1 {
            return Err(Error::Dimension {
                context: "chain widths",
                expected: vec![shapes.len() + 1],
                actual: vec![widths.len()],
            });
        }
        let cells = shapes
            .iter()
            .enumerate()
            .map(|(k, s)| CellNet::init(widths[k], s, widths[k + 1], rng))
            .collect();
        Ok(ChainNet { cells })
    }

    /// Instantiates `arch` with fresh weights.
    pub fn for_arch<R: Rng + ?Sized>(
        space: &SearchSpace,
        arch: &Architecture,
        rng: &mut R,
    ) -> Result<Self> {
        arch.validate(space)?;
        ChainNet::init(&boundary_widths(space), &arch_shapes(space, arch), rng)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for c in &self.cells {
            h = c.forward(&h)?;
        }
        Ok(h)
    }

    /// Outputs of every block: `[Y_1, ..., Y_N]`.
    pub fn block_outputs(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut out = Vec::with_capacity(self.cells.len());
        let mut h = x.clone();
        for c in &self.cells {
            h = c.forward(&h)?;
            out.push(h.clone());
        }
        Ok(out)
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.cells.iter().flat_map(CellNet::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.cells
            .iter_mut()
            .flat_map(CellNet::params_mut)
            .collect()
    }

    pub fn param_count(&self) -> u64 {
        self.cells.iter().map(CellNet::param_count).sum()
    }

    pub fn mac_count(&self) -> u64 {
        self.cells.iter().map(CellNet::mac_count).sum()
    }

    /// One gradient step on a minibatch; returns the batch loss.
    pub fn train_step(
        &mut self,
        x: &Tensor,
        y: &Tensor,
        state: &mut AdamState,
        hyper: &TrainHyper,
        lr: f64,
    ) -> Result<f64> {
        let mut traces = Vec::with_capacity(self.cells.len());
        let mut h = x.clone();
        for c in &self.cells {
            let (out, t) = c.forward_traced(&h)?;
            traces.push(t);
            h = out;
        }
        let (loss, mut d) = mse_with_grad(y, &h)?;
        if !loss.is_finite() {
            return Err(Error::Training {
                step: state.step as usize + 1,
                what: "non-finite loss".into(),
            });
        }
        let mut grads = Vec::with_capacity(self.cells.len());
        for (c, t) in self.cells.iter().zip(&traces).rev() {
            let (g, dx) = c.backward_traced(t, &d)?;
            grads.push(g);
            d = dx;
        }
        grads.reverse();
        let grad_refs: Vec<&Tensor> = grads.iter().flat_map(CellGrads::tensors).collect();
        let mut params = self.params_mut();
        adam_step(&mut params, &grad_refs, state, hyper, lr)?;
        Ok(loss)
    }

    /// Full-batch MSE.
    pub fn evaluate(&self, x: &Tensor, y: &Tensor) -> Result<f64> {
        mse(y, &self.forward(x)?)
    }
}

pub fn boundary_widths(space: &SearchSpace) -> Vec<usize> {
    let mut w: Vec<usize> = space.blocks.iter().map(|b| b.input_width).collect();
    w.push(space.output_width());
    w
}

pub fn arch_shapes(space: &SearchSpace, arch: &Architecture) -> Vec<CellShape> {
    arch.blocks
        .iter()
        .zip(&space.blocks)
        .map(|(a, b)| CellShape {
            width: b.cells[a.cell].width,
            ops: a.ops.iter().map(|&o| space.catalog[o]).collect(),
        })
        .collect()
}

/// Shuffled minibatches of `indices`.
pub fn minibatches<R: Rng + ?Sized>(
    indices: &[usize],
    batch: usize,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let mut order = indices.to_vec();
    order.shuffle(rng);
    order.chunks(batch.max(1)).map(<[usize]>::to_vec).collect()
}

/// Outcome of [`fit_chain`].
#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub epoch_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
}

/// End-to-end regression training with Adam. Stops early once validation
/// loss fails to improve for `patience` consecutive epochs.
#[allow(clippy::too_many_arguments)]
pub fn fit_chain<R: Rng + ?Sized>(
    net: &mut ChainNet,
    x: &Tensor,
    y: &Tensor,
    train: &[usize],
    val: &[usize],
    hyper: &TrainHyper,
    patience: Option<usize>,
    rng: &mut R,
) -> Result<FitReport> {
    let mut state = AdamState::for_params(&net.params());
    let (xv, yv) = (x.select_rows(val), y.select_rows(val));
    let mut report = FitReport {
        epoch_losses: Vec::new(),
        val_losses: Vec::new(),
    };
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for epoch in 0..hyper.epochs {
        let lr = hyper.lr_at(hyper.learning_rate, epoch);
        let mut total = 0.0;
        let mut count = 0;
        for batch in minibatches(train, hyper.batch_size, rng) {
            let (xb, yb) = (x.select_rows(&batch), y.select_rows(&batch));
            total += net.train_step(&xb, &yb, &mut state, hyper, lr)? * batch.len() as f64;
            count += batch.len();
        }
        report.epoch_losses.push(total / count.max(1) as f64);
        if !val.is_empty() {
            let v = net.evaluate(&xv, &yv)?;
            if !v.is_finite() {
                return Err(Error::Training {
                    step: state.step as usize,
                    what: format!("non-finite validation loss at epoch {epoch}"),
                });
            }
            report.val_losses.push(v);
            if v < best * (1.0 - 1e-4) {
                best = v;
                stale = 0;
            } else {
                stale += 1;
                if patience.is_some_and(|p| stale >= p) {
                    break;
                }
            }
        }
    }
    Ok(report)
}
