use rayon::prelude::*;

use super::{NumericsError, Scalar, Shape, Tensor};

/// `⌊(extent + 2p − k)/s⌋ + 1`, or `None` when the kernel does not fit.
pub fn conv_output_extent(extent: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = extent + 2 * padding;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// `(extent − 1)·s − 2p + k + output_padding`, or `None` when that is < 1.
pub fn tconv_output_extent(
    extent: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Option<usize> {
    let out =
        (extent as isize - 1) * stride as isize - 2 * padding as isize + kernel as isize + output_padding as isize;
    (extent >= 1 && out >= 1).then_some(out as usize)
}

/// Weights `Cout × Cin × k × k` for a zero-padded strided cross-correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T = f32> {
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
    pub stride: usize,
    pub padding: usize,
}

/// Transposed convolution, the adjoint of [`conv2d_forward`].
///
/// Weights are stored `Cin × Cout × k × k`, so the same buffer read as a
/// `ConvParams` (`Cout' = Cin`, `Cin' = Cout`) is the matching convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct TConvParams<T = f32> {
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
    pub stride: usize,
    pub padding: usize,
    pub output_padding: usize,
}

/// Gradients of a conv or transposed-conv layer, shaped like its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T = f32> {
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
}

fn check_kernel<T: Scalar>(
    weight: &Tensor<T>,
    bias_len: usize,
    bias_channels: usize,
    stride: usize,
) -> Result<(), NumericsError> {
    let s = weight.shape();
    if s.h != s.w {
        return Err(NumericsError::InvalidShape(format!("kernel must be square, got {s}")));
    }
    if bias_len != bias_channels {
        return Err(NumericsError::shape("conv bias", bias_channels, bias_len));
    }
    if stride == 0 {
        return Err(NumericsError::InvalidShape("stride must be positive".into()));
    }
    Ok(())
}

impl<T: Scalar> ConvParams<T> {
    pub fn new(weight: Tensor<T>, bias: Vec<T>, stride: usize, padding: usize) -> Result<Self, NumericsError> {
        check_kernel(&weight, bias.len(), weight.shape().n, stride)?;
        Ok(Self { weight, bias, stride, padding })
    }

    pub fn cout(&self) -> usize {
        self.weight.shape().n
    }

    pub fn cin(&self) -> usize {
        self.weight.shape().c
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape().h
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape, NumericsError> {
        if input.c != self.cin() {
            return Err(NumericsError::shape(
                "conv2d",
                format!("C={} (weights {})", self.cin(), self.weight.shape()),
                input,
            ));
        }
        let k = self.kernel();
        let dims = conv_output_extent(input.h, k, self.stride, self.padding).zip(conv_output_extent(
            input.w,
            k,
            self.stride,
            self.padding,
        ));
        let (h, w) = dims.ok_or_else(|| {
            NumericsError::InvalidShape(format!("kernel {k} with padding {} does not fit input {input}", self.padding))
        })?;
        Ok(Shape::new(input.n, self.cout(), h, w))
    }

    pub fn zero_grads(&self) -> ConvGrads<T> {
        ConvGrads {
            weight: Tensor::zeros(self.weight.shape()).expect("weight shape is valid"),
            bias: vec![T::zero(); self.bias.len()],
        }
    }
}

impl<T: Scalar> TConvParams<T> {
    pub fn new(
        weight: Tensor<T>,
        bias: Vec<T>,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Self, NumericsError> {
        check_kernel(&weight, bias.len(), weight.shape().c, stride)?;
        if output_padding >= stride {
            return Err(NumericsError::InvalidShape(format!(
                "output padding {output_padding} must be smaller than stride {stride}"
            )));
        }
        Ok(Self { weight, bias, stride, padding, output_padding })
    }

    pub fn cin(&self) -> usize {
        self.weight.shape().n
    }

    pub fn cout(&self) -> usize {
        self.weight.shape().c
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape().h
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape, NumericsError> {
        if input.c != self.cin() {
            return Err(NumericsError::shape(
                "tconv2d",
                format!("C={} (weights {})", self.cin(), self.weight.shape()),
                input,
            ));
        }
        let k = self.kernel();
        let ext = |e| tconv_output_extent(e, k, self.stride, self.padding, self.output_padding);
        let (h, w) = ext(input.h).zip(ext(input.w)).ok_or_else(|| {
            NumericsError::InvalidShape(format!("transposed conv output extents < 1 for input {input}"))
        })?;
        Ok(Shape::new(input.n, self.cout(), h, w))
    }

    pub fn zero_grads(&self) -> ConvGrads<T> {
        ConvGrads {
            weight: Tensor::zeros(self.weight.shape()).expect("weight shape is valid"),
            bias: vec![T::zero(); self.bias.len()],
        }
    }
}

/// Sliding-window geometry between a large (`big`) and a small grid.
#[derive(Clone, Copy)]
struct Window {
    channels: usize,
    big_h: usize,
    big_w: usize,
    small_h: usize,
    small_w: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
}

impl Window {
    fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn cols(&self) -> usize {
        self.small_h * self.small_w
    }

    /// Big-grid coordinate touched by small index `o` and kernel tap `t`.
    fn source(&self, o: usize, t: usize, limit: usize) -> Option<usize> {
        let y = (o * self.stride + t) as isize - self.padding as isize;
        (y >= 0 && (y as usize) < limit).then_some(y as usize)
    }

    /// Unfolds `big` (`C × big_h × big_w`) into `col` (`C·k·k × small_h·small_w`).
    fn im2col<T: Scalar>(&self, big: &[T], col: &mut [T]) {
        let k = self.kernel;
        let cols = self.cols();
        let plane = self.big_h * self.big_w;
        for ci in 0..self.channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut col[((ci * k + ky) * k + kx) * cols..][..cols];
                    for oy in 0..self.small_h {
                        let dst = &mut row[oy * self.small_w..(oy + 1) * self.small_w];
                        match self.source(oy, ky, self.big_h) {
                            None => dst.iter_mut().for_each(|v| *v = T::zero()),
                            Some(y) => {
                                let src = &big[ci * plane + y * self.big_w..][..self.big_w];
                                for (ox, v) in dst.iter_mut().enumerate() {
                                    *v = match self.source(ox, kx, self.big_w) {
                                        Some(x) => src[x],
                                        None => T::zero(),
                                    };
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Self::im2col`]: scatters-adds `col` back onto `big`.
    fn col2im<T: Scalar>(&self, col: &[T], big: &mut [T]) {
        let k = self.kernel;
        let cols = self.cols();
        let plane = self.big_h * self.big_w;
        for ci in 0..self.channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = &col[((ci * k + ky) * k + kx) * cols..][..cols];
                    for oy in 0..self.small_h {
                        let Some(y) = self.source(oy, ky, self.big_h) else {
                            continue;
                        };
                        let dst = &mut big[ci * plane + y * self.big_w..][..self.big_w];
                        let src = &row[oy * self.small_w..(oy + 1) * self.small_w];
                        for (ox, &v) in src.iter().enumerate() {
                            if let Some(x) = self.source(ox, kx, self.big_w) {
                                dst[x] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn add_bias<T: Scalar>(out: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn channel_sums<T: Scalar>(grad: &[T], plane: usize) -> Vec<T> {
    grad.chunks(plane).map(|c| c.iter().copied().sum()).collect()
}

/// Sums per-sample gradients in batch order.
fn reduce_grads<T: Scalar>(weight_shape: Shape, parts: Vec<(Vec<T>, Vec<T>, Vec<T>)>) -> (Vec<T>, ConvGrads<T>) {
    let mut grad_input = Vec::new();
    let mut weight = vec![T::zero(); weight_shape.numel()];
    let mut bias: Vec<T> = Vec::new();
    for (gx, gw, gb) in parts {
        grad_input.extend_from_slice(&gx);
        weight.iter_mut().zip(&gw).for_each(|(a, &b)| *a += b);
        if bias.is_empty() {
            bias = gb;
        } else {
            bias.iter_mut().zip(&gb).for_each(|(a, &b)| *a += b);
        }
    }
    let weight = Tensor::from_vec(weight_shape, weight).expect("weight shape is valid");
    (grad_input, ConvGrads { weight, bias })
}

pub fn conv2d_forward<T: Scalar>(input: &Tensor<T>, params: &ConvParams<T>) -> Result<Tensor<T>, NumericsError> {
    let in_shape = input.shape();
    let out_shape = params.output_shape(in_shape)?;
    let win = Window {
        channels: in_shape.c,
        big_h: in_shape.h,
        big_w: in_shape.w,
        small_h: out_shape.h,
        small_w: out_shape.w,
        kernel: params.kernel(),
        stride: params.stride,
        padding: params.padding,
    };
    let cout = params.cout();
    let mut out = vec![T::zero(); out_shape.numel()];
    out.par_chunks_mut(out_shape.sample_len()).zip(input.data().par_chunks(in_shape.sample_len())).for_each(
        |(o, x)| {
            let mut col = vec![T::zero(); win.rows() * win.cols()];
            win.im2col(x, &mut col);
            T::gemm(cout, win.rows(), win.cols(), params.weight.data(), false, &col, false, o, false);
            add_bias(o, &params.bias, win.cols());
        },
    );
    Tensor::from_vec(out_shape, out)
}

/// Returns `(grad_input, parameter grads)` for [`conv2d_forward`].
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    params: &ConvParams<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, ConvGrads<T>), NumericsError> {
    let in_shape = input.shape();
    let out_shape = params.output_shape(in_shape)?;
    if grad_out.shape() != out_shape {
        return Err(NumericsError::shape("conv2d_backward", out_shape, grad_out.shape()));
    }
    let win = Window {
        channels: in_shape.c,
        big_h: in_shape.h,
        big_w: in_shape.w,
        small_h: out_shape.h,
        small_w: out_shape.w,
        kernel: params.kernel(),
        stride: params.stride,
        padding: params.padding,
    };
    let cout = params.cout();
    let (rows, cols) = (win.rows(), win.cols());
    let parts: Vec<_> = input
        .data()
        .par_chunks(in_shape.sample_len())
        .zip(grad_out.data().par_chunks(out_shape.sample_len()))
        .map(|(x, g)| {
            let mut col = vec![T::zero(); rows * cols];
            win.im2col(x, &mut col);
            let mut gw = vec![T::zero(); cout * rows];
            T::gemm(cout, cols, rows, g, false, &col, true, &mut gw, false);
            let mut gcol = vec![T::zero(); rows * cols];
            T::gemm(rows, cout, cols, params.weight.data(), true, g, false, &mut gcol, false);
            let mut gx = vec![T::zero(); in_shape.sample_len()];
            win.col2im(&gcol, &mut gx);
            (gx, gw, channel_sums(g, cols))
        })
        .collect();
    let (gx, grads) = reduce_grads(params.weight.shape(), parts);
    Ok((Tensor::from_vec(in_shape, gx)?, grads))
}

pub fn tconv2d_forward<T: Scalar>(input: &Tensor<T>, params: &TConvParams<T>) -> Result<Tensor<T>, NumericsError> {
    let in_shape = input.shape();
    let out_shape = params.output_shape(in_shape)?;
    let win = Window {
        channels: out_shape.c,
        big_h: out_shape.h,
        big_w: out_shape.w,
        small_h: in_shape.h,
        small_w: in_shape.w,
        kernel: params.kernel(),
        stride: params.stride,
        padding: params.padding,
    };
    let cin = params.cin();
    let mut out = vec![T::zero(); out_shape.numel()];
    out.par_chunks_mut(out_shape.sample_len()).zip(input.data().par_chunks(in_shape.sample_len())).for_each(
        |(o, x)| {
            let mut col = vec![T::zero(); win.rows() * win.cols()];
            T::gemm(win.rows(), cin, win.cols(), params.weight.data(), true, x, false, &mut col, false);
            win.col2im(&col, o);
            add_bias(o, &params.bias, out_shape.plane());
        },
    );
    Tensor::from_vec(out_shape, out)
}

/// Returns `(grad_input, parameter grads)` for [`tconv2d_forward`].
pub fn tconv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    params: &TConvParams<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, ConvGrads<T>), NumericsError> {
    let in_shape = input.shape();
    let out_shape = params.output_shape(in_shape)?;
    if grad_out.shape() != out_shape {
        return Err(NumericsError::shape("tconv2d_backward", out_shape, grad_out.shape()));
    }
    let win = Window {
        channels: out_shape.c,
        big_h: out_shape.h,
        big_w: out_shape.w,
        small_h: in_shape.h,
        small_w: in_shape.w,
        kernel: params.kernel(),
        stride: params.stride,
        padding: params.padding,
    };
    let cin = params.cin();
    let (rows, cols) = (win.rows(), win.cols());
    let parts: Vec<_> = input
        .data()
        .par_chunks(in_shape.sample_len())
        .zip(grad_out.data().par_chunks(out_shape.sample_len()))
        .map(|(x, g)| {
            let mut gcol = vec![T::zero(); rows * cols];
            win.im2col(g, &mut gcol);
            let mut gx = vec![T::zero(); cin * cols];
            T::gemm(cin, rows, cols, params.weight.data(), false, &gcol, false, &mut gx, false);
            let mut gw = vec![T::zero(); cin * rows];
            T::gemm(cin, cols, rows, x, false, &gcol, true, &mut gw, false);
            (gx, gw, channel_sums(g, out_shape.plane()))
        })
        .collect();
    let (gx, grads) = reduce_grads(params.weight.shape(), parts);
    Ok((Tensor::from_vec(in_shape, gx)?, grads))
}
