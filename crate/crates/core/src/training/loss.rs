use crate::tensor::{Real, Tensor, TensorError};

/// Residual loss over a batch of `m` pairs:
/// `L = 1/(2m) * sum_i ||R_i - (y_i - x_i)||^2`, summed over every pixel.
///
/// Returns `L` and `dL/dR = (R - (y - x)) / m`.
pub fn residual_loss<T: Real>(
    residual_pred: &Tensor<T>,
    y: &Tensor<T>,
    x: &Tensor<T>,
) -> Result<(f64, Tensor<T>), TensorError> {
    residual_pred.expect_same_shape(y, "distorted batch")?;
    residual_pred.expect_same_shape(x, "clean batch")?;
    let (m, _, _, _) = residual_pred.dims4()?;
    let inv_m = 1.0 / m as f64;
    let mut grad = Tensor::zeros(residual_pred.shape());
    let mut sum = 0.0f64;
    for (((g, &r), &yv), &xv) in grad
        .data_mut()
        .iter_mut()
        .zip(residual_pred.data())
        .zip(y.data())
        .zip(x.data())
    {
        let e = r.as_f64() - (yv.as_f64() - xv.as_f64());
        sum += e * e;
        *g = T::from_f64(e * inv_m);
    }
    Ok((0.5 * inv_m * sum, grad))
}
