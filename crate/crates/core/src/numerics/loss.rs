use super::{NumericsError, Scalar, Tensor};

/// Mean squared error over all elements and its gradient w.r.t. `pred`.
///
/// The loss is accumulated in f64 regardless of `T`.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>), NumericsError> {
    if pred.shape() != target.shape() {
        return Err(NumericsError::shape("mse_loss", target.shape(), pred.shape()));
    }
    let count = pred.len() as f64;
    let scale = T::from_f64_lossy(2.0 / count);
    let mut sum = 0.0f64;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            sum += d.as_f64() * d.as_f64();
            d * scale
        })
        .collect();
    Ok((sum / count, Tensor::from_vec(pred.shape(), grad)?))
}
