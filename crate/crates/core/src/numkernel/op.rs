use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative at pre-activation `v`. ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = v.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Operation family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    /// expand linear -> activation -> project linear
    Bottleneck,
    /// single linear -> activation
    Dense,
}

/// Fully connected layer `y = x·W + b` with `W: [in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearGrads {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: Tensor::zeros(&[input, output]),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, gain: f64, rng: &mut R) -> Self {
        let std = (gain / input as f64).sqrt();
        Linear {
            weight: Tensor::randn(&[input, output], std, rng),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn input_width(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn output_width(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn param_count(&self) -> u64 {
        (self.weight.len() + self.bias.len()) as u64
    }

    pub fn mac_count(&self) -> u64 {
        self.weight.len() as u64
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.input_width() {
            return Err(Error::Dimension {
                context: "linear input",
                expected: vec![self.input_width()],
                actual: vec![x.cols()],
            });
        }
        let mut y = x.matmul(&self.weight)?;
        y.add_row_bias(&self.bias)?;
        Ok(y)
    }

    pub fn backward(&self, x: &Tensor, dy: &Tensor) -> Result<(LinearGrads, Tensor)> {
        if dy.cols() != self.output_width() || dy.rows() != x.rows() {
            return Err(Error::Dimension {
                context: "linear backward",
                expected: vec![x.rows(), self.output_width()],
                actual: dy.shape().to_vec(),
            });
        }
        let weight = x.matmul_tn(dy)?;
        let bias = dy.column_sums();
        let dx = dy.matmul_nt(&self.weight)?;
        Ok((LinearGrads { weight, bias }, dx))
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}

impl LinearGrads {
    pub fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }
}

/// One candidate operation with its weights.
#[derive(Clone, Debug, PartialEq)]
pub struct OpParams {
    pub kind: OpKind,
    pub expansion: usize,
    pub activation: Activation,
    pub expand: Linear,
    pub project: Option<Linear>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpGrads {
    pub expand: LinearGrads,
    pub project: Option<LinearGrads>,
}

impl OpGrads {
    /// Gradient tensors in the same order as [`OpParams::params`].
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = self.expand.tensors();
        if let Some(p) = &self.project {
            out.extend(p.tensors());
        }
        out
    }
}

/// Pre-activation values kept from a forward pass.
pub(crate) struct OpTrace {
    pre: Tensor,
    hidden: Tensor,
}

impl OpParams {
    /// Freshly initialised operation.
    pub fn init<R: Rng + ?Sized>(
        kind: OpKind,
        expansion: usize,
        activation: Activation,
        input: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        let gain = match activation {
            Activation::Relu => 2.0,
            Activation::Tanh => 1.0,
        };
        match kind {
            OpKind::Bottleneck => {
                let hidden = expansion * output;
                OpParams {
                    kind,
                    expansion,
                    activation,
                    expand: Linear::init(input, hidden, gain, rng),
                    project: Some(Linear::init(hidden, output, 1.0, rng)),
                }
            }
            OpKind::Dense => OpParams {
                kind,
                expansion: 1,
                activation,
                expand: Linear::init(input, output, gain, rng),
                project: None,
            },
        }
    }

    pub fn zeros(
        kind: OpKind,
        expansion: usize,
        activation: Activation,
        input: usize,
        output: usize,
    ) -> Self {
        match kind {
            OpKind::Bottleneck => OpParams {
                kind,
                expansion,
                activation,
                expand: Linear::zeros(input, expansion * output),
                project: Some(Linear::zeros(expansion * output, output)),
            },
            OpKind::Dense => OpParams {
                kind,
                expansion: 1,
                activation,
                expand: Linear::zeros(input, output),
                project: None,
            },
        }
    }

    pub fn input_width(&self) -> usize {
        self.expand.input_width()
    }

    pub fn output_width(&self) -> usize {
        match &self.project {
            Some(p) => p.output_width(),
            None => self.expand.output_width(),
        }
    }

    pub fn param_count(&self) -> u64 {
        self.expand.param_count() + self.project.as_ref().map_or(0, Linear::param_count)
    }

    pub fn mac_count(&self) -> u64 {
        self.expand.mac_count() + self.project.as_ref().map_or(0, Linear::mac_count)
    }

    /// Closed-form parameter count, no weights needed.
    pub fn param_count_for(kind: OpKind, expansion: usize, input: usize, output: usize) -> u64 {
        let (i, o) = (input as u64, output as u64);
        match kind {
            OpKind::Bottleneck => {
                let h = expansion as u64 * o;
                i * h + h + h * o + o
            }
            OpKind::Dense => i * o + o,
        }
    }

    pub fn mac_count_for(kind: OpKind, expansion: usize, input: usize, output: usize) -> u64 {
        let (i, o) = (input as u64, output as u64);
        match kind {
            OpKind::Bottleneck => {
                let h = expansion as u64 * o;
                i * h + h * o
            }
            OpKind::Dense => i * o,
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = self.expand.params();
        if let Some(p) = &self.project {
            out.extend(p.params());
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.expand.params_mut();
        if let Some(p) = &mut self.project {
            out.extend(p.params_mut());
        }
        out
    }

    pub(crate) fn forward_traced(&self, x: &Tensor) -> Result<(Tensor, OpTrace)> {
        let pre = self.expand.forward(x)?;
        let act = self.activation;
        let hidden = pre.map(|v| act.apply(v));
        let y = match &self.project {
            Some(p) => p.forward(&hidden)?,
            None => hidden.clone(),
        };
        Ok((y, OpTrace { pre, hidden }))
    }

    pub(crate) fn backward_traced(
        &self,
        x: &Tensor,
        trace: &OpTrace,
        dy: &Tensor,
    ) -> Result<(OpGrads, Tensor)> {
        if dy.shape() != [x.rows(), self.output_width()] {
            return Err(Error::Dimension {
                context: "op backward",
                expected: vec![x.rows(), self.output_width()],
                actual: dy.shape().to_vec(),
            });
        }
        let (project, mut dh) = match &self.project {
            Some(p) => {
                let (g, dh) = p.backward(&trace.hidden, dy)?;
                (Some(g), dh)
            }
            None => (None, dy.clone()),
        };
        let act = self.activation;
        for (d, &z) in dh.data_mut().iter_mut().zip(trace.pre.data()) {
            *d *= act.derivative(z);
        }
        let (expand, dx) = self.expand.backward(x, &dh)?;
        Ok((OpGrads { expand, project }, dx))
    }
}

/// Applies one operation to a batch `x: [rows, input_width]`.
pub fn op_forward(op: &OpParams, x: &Tensor) -> Result<Tensor> {
    op.forward_traced(x).map(|(y, _)| y)
}

/// Gradients of a scalar loss with respect to the op's parameters and input,
/// given the upstream gradient `dy`.
pub fn op_backward(op: &OpParams, x: &Tensor, dy: &Tensor) -> Result<(OpGrads, Tensor)> {
    let (_, trace) = op.forward_traced(x)?;
    op.backward_traced(x, &trace, dy)
}
