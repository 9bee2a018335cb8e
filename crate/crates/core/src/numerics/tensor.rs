use std::fmt;

use super::{NumericsError, Scalar};

/// Extents of a dense `N × C × H × W` tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    /// Shape of a batch of `n` vectors of length `len` (spatial extents 1).
    pub const fn vector(n: usize, len: usize) -> Self {
        Self::new(n, len, 1, 1)
    }

    pub fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    /// Elements in one batch item.
    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    fn validate(&self) -> Result<(), NumericsError> {
        if self.n == 0 || self.c == 0 || self.h == 0 || self.w == 0 {
            return Err(NumericsError::InvalidShape(format!("all extents must be >= 1, got {self}")));
        }
        Ok(())
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// Dense row-major `N × C × H × W` array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: Shape) -> Result<Self, NumericsError> {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: Shape, value: T) -> Result<Self, NumericsError> {
        shape.validate()?;
        Ok(Self { shape, data: vec![value; shape.numel()] })
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self, NumericsError> {
        shape.validate()?;
        if data.len() != shape.numel() {
            return Err(NumericsError::InvalidShape(format!("{} elements cannot fill shape {shape}", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Contiguous slice holding batch item `i`.
    pub fn sample(&self, i: usize) -> &[T] {
        let len = self.shape.sample_len();
        &self.data[i * len..(i + 1) * len]
    }

    /// Copies batch item `i` into a standalone `1 × C × H × W` tensor.
    pub fn sample_tensor(&self, i: usize) -> Self {
        Self { shape: Shape { n: 1, ..self.shape }, data: self.sample(i).to_vec() }
    }

    /// Same data, new extents with the same element count.
    pub fn reshape(self, shape: Shape) -> Result<Self, NumericsError> {
        Self::from_vec(shape, self.data)
    }

    /// Stacks `1 × C × H × W` (or larger) tensors of matching item shape along N.
    pub fn stack(items: &[Self]) -> Result<Self, NumericsError> {
        let first = items.first().ok_or_else(|| NumericsError::InvalidShape("cannot stack zero tensors".into()))?;
        let item = first.shape;
        let mut n = 0;
        let mut data = Vec::with_capacity(items.iter().map(|t| t.len()).sum());
        for t in items {
            let s = t.shape;
            if (s.c, s.h, s.w) != (item.c, item.h, item.w) {
                return Err(NumericsError::shape("stack", item, s));
            }
            n += s.n;
            data.extend_from_slice(&t.data);
        }
        Self::from_vec(Shape { n, ..item }, data)
    }

    /// Gathers batch items by index into a new tensor.
    pub fn select(&self, indices: &[usize]) -> Result<Self, NumericsError> {
        let mut data = Vec::with_capacity(indices.len() * self.shape.sample_len());
        for &i in indices {
            if i >= self.shape.n {
                return Err(NumericsError::InvalidShape(format!("batch index {i} out of range for {}", self.shape)));
            }
            data.extend_from_slice(self.sample(i));
        }
        Self::from_vec(Shape { n: indices.len(), ..self.shape }, data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor { shape: self.shape, data: self.data.iter().map(|v| U::from_f64_lossy(v.as_f64())).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `Σ self·other` accumulated in f64.
    pub fn dot(&self, other: &Self) -> Result<f64, NumericsError> {
        if self.shape != other.shape {
            return Err(NumericsError::shape("dot", self.shape, other.shape));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a.as_f64() * b.as_f64()).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_extent_and_length_mismatch() {
        assert!(Tensor::<f32>::zeros(Shape::new(1, 0, 2, 2)).is_err());
        assert!(Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![0.0f32; 3]).is_err());
    }

    #[test]
    fn select_and_stack_roundtrip() {
        let t = Tensor::from_vec(Shape::new(3, 1, 1, 2), vec![0.0f32, 1., 2., 3., 4., 5.]).unwrap();
        let picked = t.select(&[2, 0]).unwrap();
        assert_eq!(picked.data(), &[4.0, 5.0, 0.0, 1.0]);
        let parts: Vec<_> = (0..3).map(|i| t.sample_tensor(i)).collect();
        assert_eq!(Tensor::stack(&parts).unwrap(), t);
    }
}
