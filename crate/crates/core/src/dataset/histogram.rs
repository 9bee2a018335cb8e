//! Per-channel 256-bin histogram matching.

use super::decode::quantize;
use super::DatasetError;
use crate::numerics::Tensor;

pub const BINS: usize = 256;

/// Cumulative 8-bit histograms of the R, G and B channels.
///
/// Stored as integer counts so lookups compare exact ratios.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelCdf {
    cumulative: Vec<[u64; BINS]>,
}

impl ChannelCdf {
    /// Pools every pixel of every image (any batch size, 3 channels).
    pub fn from_images<'a>(images: impl IntoIterator<Item = &'a Tensor>) -> Result<Self, DatasetError> {
        let mut counts = vec![[0u64; BINS]; 3];
        for img in images {
            let s = img.shape();
            if s.c != 3 {
                return Err(DatasetError::Empty(format!("expected 3 channels, got {}", s.c)));
            }
            let plane = s.plane();
            for n in 0..s.n {
                for (c, hist) in counts.iter_mut().enumerate() {
                    for &v in &img.sample(n)[c * plane..(c + 1) * plane] {
                        hist[quantize(v) as usize] += 1;
                    }
                }
            }
        }
        if counts[0].iter().all(|&c| c == 0) {
            return Err(DatasetError::Empty("no pixels for histogram".into()));
        }
        for hist in &mut counts {
            for b in 1..BINS {
                hist[b] += hist[b - 1];
            }
        }
        Ok(Self { cumulative: counts })
    }

    pub fn total(&self) -> u64 {
        self.cumulative[0][BINS - 1]
    }

    /// `P(value ≤ bin)` for one channel.
    pub fn cdf(&self, channel: usize, bin: usize) -> f64 {
        self.cumulative[channel][bin] as f64 / self.total() as f64
    }

    pub fn channel(&self, channel: usize) -> Vec<f64> {
        (0..BINS).map(|b| self.cdf(channel, b)).collect()
    }

    /// Smallest bin `r` with `ref_cdf(r) ≥ num / den`, compared exactly.
    fn quantile(&self, channel: usize, num: u64, den: u64) -> usize {
        let total = self.total() as u128;
        let cum = &self.cumulative[channel];
        cum.partition_point(|&c| (c as u128) * (den as u128) < (num as u128) * total).min(BINS - 1)
    }

    /// Largest per-channel `sup_b |F(b) − G(b)|`.
    pub fn sup_distance(&self, other: &ChannelCdf) -> f64 {
        (0..3).flat_map(|c| (0..BINS).map(move |b| (self.cdf(c, b) - other.cdf(c, b)).abs())).fold(0.0, f64::max)
    }
}

/// Maps each pixel value `v` to `reference⁻¹(source(v))` per channel.
pub fn histogram_match(image: &Tensor, reference: &ChannelCdf) -> Tensor {
    let s = image.shape();
    let plane = s.plane();
    let mut out = image.clone();
    for n in 0..s.n {
        let src = ChannelCdf::from_images([&image.sample_tensor(n)]).expect("non-empty 3-channel sample");
        let total = src.total();
        let sample = &mut out.data_mut()[n * s.sample_len()..(n + 1) * s.sample_len()];
        for c in 0..3 {
            let lut: Vec<f32> =
                (0..BINS).map(|b| reference.quantile(c, src.cumulative[c][b], total) as f32 / 255.0).collect();
            for v in &mut sample[c * plane..(c + 1) * plane] {
                *v = lut[quantize(*v) as usize];
            }
        }
    }
    out
}
