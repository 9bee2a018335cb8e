use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{ConvParams, DenseParams, NumericsError, Scalar, Shape, TConvParams, Tensor};

/// Seeded He-normal initializer with zero biases.
///
/// Layers must be requested in a fixed order; the same seed and order
/// always produce bit-identical parameters.
pub struct ParamInit {
    rng: ChaCha8Rng,
}

impl ParamInit {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// `len` samples from `N(0, 2/fan_in)`.
    pub fn he_normal<T: Scalar>(&mut self, len: usize, fan_in: f64) -> Vec<T> {
        let std = (2.0 / fan_in).sqrt();
        (0..len)
            .map(|_| {
                let z: f64 = self.rng.sample(StandardNormal);
                T::from_f64_lossy(z * std)
            })
            .collect()
    }

    pub fn conv<T: Scalar>(
        &mut self,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<ConvParams<T>, NumericsError> {
        let shape = Shape::new(cout, cin, kernel, kernel);
        let w = self.he_normal(shape.numel(), (cin * kernel * kernel) as f64);
        ConvParams::new(Tensor::from_vec(shape, w)?, vec![T::zero(); cout], stride, padding)
    }

    /// Fan-in of a transposed conv is the average number of taps feeding
    /// one output cell, `Cin·k²/s²`.
    pub fn tconv<T: Scalar>(
        &mut self,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<TConvParams<T>, NumericsError> {
        let shape = Shape::new(cin, cout, kernel, kernel);
        let fan_in = (cin * kernel * kernel) as f64 / (stride * stride) as f64;
        let w = self.he_normal(shape.numel(), fan_in);
        TConvParams::new(Tensor::from_vec(shape, w)?, vec![T::zero(); cout], stride, padding, output_padding)
    }

    pub fn dense<T: Scalar>(&mut self, in_dim: usize, out_dim: usize) -> Result<DenseParams<T>, NumericsError> {
        let w = self.he_normal(in_dim * out_dim, in_dim as f64);
        DenseParams::new(w, vec![T::zero(); out_dim], in_dim, out_dim)
    }
}
