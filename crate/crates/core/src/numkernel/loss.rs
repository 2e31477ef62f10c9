use super::tensor::Tensor;
use crate::error::Result;

/// Mean squared error `(1/K)·‖y − ŷ‖²` with `K` the number of entries.
pub fn mse(y: &Tensor, yhat: &Tensor) -> Result<f64> {
    y.same_shape(yhat, "mse")?;
    let sum: f64 = y
        .data()
        .iter()
        .zip(yhat.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / y.len() as f64)
}

/// Loss value and gradient with respect to `yhat`.
pub fn mse_with_grad(y: &Tensor, yhat: &Tensor) -> Result<(f64, Tensor)> {
    let loss = mse(y, yhat)?;
    let scale = 2.0 / y.len() as f64;
    let mut grad = yhat.clone();
    for (g, t) in grad.data_mut().iter_mut().zip(y.data()) {
        *g = scale * (*g - t);
    }
    Ok((loss, grad))
}
