use super::{NumericsError, Scalar, Shape, Tensor};

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Backward through ReLU, given the forward *output*.
pub fn relu_backward<T: Scalar>(output: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
    zip_with("relu_backward", output, grad, |y, g| if y > T::zero() { g } else { T::zero() })
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| T::one() / (T::one() + (-v).exp()))
}

/// Backward through the logistic sigmoid, given the forward *output*.
pub fn sigmoid_backward<T: Scalar>(output: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
    zip_with("sigmoid_backward", output, grad, |y, g| g * y * (T::one() - y))
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
    zip_with("add", a, b, |x, y| x + y)
}

/// Multiplies every channel of `features` (`N×C×H×W`) by `map` (`N×1×H×W`).
pub fn broadcast_mul<T: Scalar>(features: &Tensor<T>, map: &Tensor<T>) -> Result<Tensor<T>, NumericsError> {
    let fs = features.shape();
    check_map(fs, map.shape())?;
    let plane = fs.plane();
    let mut out = features.clone();
    for (i, item) in out.data_mut().chunks_mut(fs.sample_len()).enumerate() {
        let m = map.sample(i);
        for chan in item.chunks_mut(plane) {
            chan.iter_mut().zip(m).for_each(|(v, &a)| *v *= a);
        }
    }
    Ok(out)
}

/// Returns `(grad_features, grad_map)` for [`broadcast_mul`].
pub fn broadcast_mul_backward<T: Scalar>(
    features: &Tensor<T>,
    map: &Tensor<T>,
    grad: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>), NumericsError> {
    let fs = features.shape();
    check_map(fs, map.shape())?;
    if grad.shape() != fs {
        return Err(NumericsError::shape("broadcast_mul_backward", fs, grad.shape()));
    }
    let grad_features = broadcast_mul(grad, map)?;
    let plane = fs.plane();
    let mut grad_map = vec![T::zero(); map.len()];
    for i in 0..fs.n {
        let gm = &mut grad_map[i * plane..(i + 1) * plane];
        for (fc, gc) in features.sample(i).chunks(plane).zip(grad.sample(i).chunks(plane)) {
            for ((acc, &f), &g) in gm.iter_mut().zip(fc).zip(gc) {
                *acc += f * g;
            }
        }
    }
    Ok((grad_features, Tensor::from_vec(map.shape(), grad_map)?))
}

fn check_map(features: Shape, map: Shape) -> Result<(), NumericsError> {
    let want = Shape { c: 1, ..features };
    if map != want {
        return Err(NumericsError::shape("broadcast_mul", want, map));
    }
    Ok(())
}

fn zip_with<T: Scalar>(
    op: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>, NumericsError> {
    if a.shape() != b.shape() {
        return Err(NumericsError::shape(op, a.shape(), b.shape()));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.shape(), data)
}
