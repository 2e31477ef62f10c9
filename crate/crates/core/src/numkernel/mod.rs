//! Dense tensor math: the candidate-operation family with hand-derived
//! gradients, losses, and the Adam optimizer.

mod adam;
mod loss;
mod op;
mod tensor;

pub use adam::{adam_step, AdamState, TrainHyper};
pub use loss::{mse, mse_with_grad};
pub(crate) use op::OpTrace;
pub use op::{op_backward, op_forward, Activation, Linear, LinearGrads, OpGrads, OpKind, OpParams};
pub use tensor::Tensor;
