use super::{NumericsError, Scalar, Shape, Tensor};

/// Affine map `y = W·x + b` with `W` stored row-major `out_dim × in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<T = f32> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub in_dim: usize,
    pub out_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads<T = f32> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> DenseParams<T> {
    pub fn new(weight: Vec<T>, bias: Vec<T>, in_dim: usize, out_dim: usize) -> Result<Self, NumericsError> {
        if in_dim == 0 || out_dim == 0 {
            return Err(NumericsError::InvalidShape("dense extents must be >= 1".into()));
        }
        if weight.len() != in_dim * out_dim {
            return Err(NumericsError::shape("dense weight", in_dim * out_dim, weight.len()));
        }
        if bias.len() != out_dim {
            return Err(NumericsError::shape("dense bias", out_dim, bias.len()));
        }
        Ok(Self { weight, bias, in_dim, out_dim })
    }

    pub fn zero_grads(&self) -> DenseGrads<T> {
        DenseGrads { weight: vec![T::zero(); self.weight.len()], bias: vec![T::zero(); self.out_dim] }
    }
}

/// Applies the layer to every batch item (each item flattened to a vector).
///
/// Rows are computed one at a time with a fixed summation order, so the
/// output for an item never depends on the rest of the batch.
pub fn dense_forward<T: Scalar>(input: &Tensor<T>, params: &DenseParams<T>) -> Result<Tensor<T>, NumericsError> {
    let s = input.shape();
    if s.sample_len() != params.in_dim {
        return Err(NumericsError::shape("dense_forward", params.in_dim, s.sample_len()));
    }
    let mut out = Vec::with_capacity(s.n * params.out_dim);
    for i in 0..s.n {
        let x = input.sample(i);
        for (row, &b) in params.weight.chunks(params.in_dim).zip(&params.bias) {
            let mut acc = b;
            for (&w, &v) in row.iter().zip(x) {
                acc += w * v;
            }
            out.push(acc);
        }
    }
    Tensor::from_vec(Shape::vector(s.n, params.out_dim), out)
}

/// Returns `(grad_input, parameter grads)`; `grad_input` has the input's shape.
pub fn dense_backward<T: Scalar>(
    input: &Tensor<T>,
    params: &DenseParams<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, DenseGrads<T>), NumericsError> {
    let s = input.shape();
    if s.sample_len() != params.in_dim {
        return Err(NumericsError::shape("dense_backward", params.in_dim, s.sample_len()));
    }
    let expected = Shape::vector(s.n, params.out_dim);
    if grad_out.shape().numel() != expected.numel() || grad_out.shape().n != s.n {
        return Err(NumericsError::shape("dense_backward", expected, grad_out.shape()));
    }
    let mut grads = params.zero_grads();
    let mut grad_input = vec![T::zero(); s.numel()];
    for i in 0..s.n {
        let x = input.sample(i);
        let g = grad_out.sample(i);
        let gx = &mut grad_input[i * params.in_dim..(i + 1) * params.in_dim];
        for (o, &go) in g.iter().enumerate() {
            grads.bias[o] += go;
            let row = &params.weight[o * params.in_dim..(o + 1) * params.in_dim];
            let grow = &mut grads.weight[o * params.in_dim..(o + 1) * params.in_dim];
            for j in 0..params.in_dim {
                grow[j] += go * x[j];
                gx[j] += go * row[j];
            }
        }
    }
    Ok((Tensor::from_vec(s, grad_input)?, grads))
}

/// Per-channel spatial mean, `N × C × H × W → N × C × 1 × 1`.
pub fn global_avg_pool<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let s = input.shape();
    let scale = T::from_f64_lossy(1.0 / s.plane() as f64);
    let data = input.data().chunks(s.plane()).map(|c| c.iter().copied().sum::<T>() * scale).collect();
    Tensor::from_vec(Shape::vector(s.n, s.c), data).expect("pooled shape is valid")
}

/// Spreads each channel gradient uniformly over the `H × W` cells.
pub fn global_avg_pool_backward<T: Scalar>(
    input_shape: Shape,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>, NumericsError> {
    let expected = Shape::vector(input_shape.n, input_shape.c);
    if grad_out.shape() != expected {
        return Err(NumericsError::shape("global_avg_pool_backward", expected, grad_out.shape()));
    }
    let plane = input_shape.plane();
    let scale = T::from_f64_lossy(1.0 / plane as f64);
    let mut data = Vec::with_capacity(input_shape.numel());
    for &g in grad_out.data() {
        data.extend(std::iter::repeat_n(g * scale, plane));
    }
    Tensor::from_vec(input_shape, data)
}
