//! Differentiable layer primitives for the convolutional auto-encoder.
//!
//! Every forward op has a hand-written backward pass. Kernels are generic
//! over [`Scalar`] so the same code is exercised in `f64` by the gradient
//! checks and in `f32` by training and inference.
//!
//! Batch items are processed independently (in parallel when rayon has
//! workers) and parameter gradients are reduced in batch order, so results
//! are bit-stable regardless of thread count.

mod activation;
mod adam;
mod conv;
mod dense;
mod init;
mod loss;
mod scalar;
mod tensor;

pub use activation::{add, broadcast_mul, broadcast_mul_backward, relu, relu_backward, sigmoid, sigmoid_backward};
pub use adam::{adam_step, AdamConfig, AdamState, ParamSlot};
pub use conv::{
    conv2d_backward, conv2d_forward, conv_output_extent, tconv2d_backward, tconv2d_forward, tconv_output_extent,
    ConvGrads, ConvParams, TConvParams,
};
pub use dense::{dense_backward, dense_forward, global_avg_pool, global_avg_pool_backward, DenseGrads, DenseParams};
pub use init::ParamInit;
pub use loss::mse_loss;
pub use scalar::Scalar;
pub use tensor::{Shape, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("{op}: shape mismatch, expected {expected}, found {found}")]
    ShapeMismatch { op: &'static str, expected: String, found: String },
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("non-finite gradient in parameter tensor `{param}`")]
    NonFiniteGradient { param: String },
}

impl NumericsError {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Self::ShapeMismatch { op, expected: expected.to_string(), found: found.to_string() }
    }
}
