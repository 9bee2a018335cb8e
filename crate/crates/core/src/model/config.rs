use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::numerics::AdamConfig;

pub const PUBLISHED_ENCODER_CHANNELS: [usize; 5] = [16, 32, 64, 128, 256];
pub const PUBLISHED_BOTTLENECK_CHANNELS: [usize; 4] = [64, 32, 1, 256];
pub const PUBLISHED_DECODER_CHANNELS: [usize; 5] = [128, 64, 32, 16, 3];
pub const PUBLISHED_EMBEDDING_DIM: usize = 200;
pub const PUBLISHED_EPOCHS: usize = 10;
pub const PUBLISHED_LEARNING_RATE: f64 = 5e-5;

/// Whether the architecture is pinned to the published layer sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfigMode {
    /// Channel lists, kernel, stride and embedding size fixed to the published values.
    Published,
    /// Any internally consistent architecture (used for tiny test models).
    Experimental,
}

/// Architecture and training hyperparameters of the auto-encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaeConfig {
    pub mode: ConfigMode,
    /// `(height, width)`; both divisible by `stride^stages`.
    pub input_size: (usize, usize),
    pub encoder_channels: Vec<usize>,
    /// `[reduce, mid, map, projection]` filters of the attention residual block.
    pub bottleneck_channels: Vec<usize>,
    pub decoder_channels: Vec<usize>,
    pub embedding_dim: usize,
    pub kernel: usize,
    pub stride: usize,
    pub bottleneck_stride: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for CaeConfig {
    fn default() -> Self {
        Self::published(64, 64)
    }
}

impl CaeConfig {
    pub fn published(height: usize, width: usize) -> Self {
        Self {
            mode: ConfigMode::Published,
            input_size: (height, width),
            encoder_channels: PUBLISHED_ENCODER_CHANNELS.to_vec(),
            bottleneck_channels: PUBLISHED_BOTTLENECK_CHANNELS.to_vec(),
            decoder_channels: PUBLISHED_DECODER_CHANNELS.to_vec(),
            embedding_dim: PUBLISHED_EMBEDDING_DIM,
            kernel: 3,
            stride: 2,
            bottleneck_stride: 1,
            epochs: PUBLISHED_EPOCHS,
            batch_size: 16,
            seed: 0,
            adam: AdamConfig { lr: PUBLISHED_LEARNING_RATE, ..AdamConfig::default() },
        }
    }

    /// Padding that keeps stride-1 layers size-preserving and stride-2 layers exact halvings.
    pub fn padding(&self) -> usize {
        self.kernel / 2
    }

    pub fn output_padding(&self) -> usize {
        self.stride - 1
    }

    pub fn stages(&self) -> usize {
        self.encoder_channels.len()
    }

    /// Spatial extents at the bottleneck, `(H / s^stages, W / s^stages)`.
    pub fn bottleneck_extent(&self) -> (usize, usize) {
        let f = self.downscale();
        (self.input_size.0 / f, self.input_size.1 / f)
    }

    fn downscale(&self) -> usize {
        self.stride.pow(self.stages() as u32)
    }

    pub fn bottleneck_width(&self) -> usize {
        *self.encoder_channels.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::Config(msg));
        let n = self.stages();
        if n < 2 {
            return fail(format!("need at least 2 encoder stages, got {n}"));
        }
        if self.decoder_channels.len() != n {
            return fail(format!("decoder has {} stages, encoder has {n}", self.decoder_channels.len()));
        }
        if self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return fail(format!("kernel must be odd, got {}", self.kernel));
        }
        if self.stride == 0 {
            return fail("stride must be positive".into());
        }
        if self.bottleneck_stride != 1 {
            return fail(format!("bottleneck stride must be 1 for the residual add, got {}", self.bottleneck_stride));
        }
        let f = self.downscale();
        let (h, w) = self.input_size;
        if h == 0 || w == 0 || h % f != 0 || w % f != 0 {
            return fail(format!("input size {h}x{w} is not divisible by {f}"));
        }
        if self.encoder_channels.iter().chain(&self.decoder_channels).chain(&self.bottleneck_channels).any(|&c| c == 0)
        {
            return fail("channel counts must be positive".into());
        }
        if self.bottleneck_channels.len() != 4 {
            return fail(format!("bottleneck needs 4 filter counts, got {}", self.bottleneck_channels.len()));
        }
        if self.bottleneck_channels[2] != 1 {
            return fail("attention map must have exactly 1 channel".into());
        }
        if self.bottleneck_channels[3] != self.bottleneck_width() {
            return fail(format!(
                "bottleneck projection ({}) must match the last encoder stage ({})",
                self.bottleneck_channels[3],
                self.bottleneck_width()
            ));
        }
        if self.decoder_channels[n - 1] != 3 {
            return fail("decoder must end in 3 (RGB) channels".into());
        }
        if self.decoder_channels[n - 2] != self.encoder_channels[0] {
            return fail(format!(
                "skip connection needs decoder stage {} ({}) to match encoder stage 1 ({})",
                n - 1,
                self.decoder_channels[n - 2],
                self.encoder_channels[0]
            ));
        }
        if self.embedding_dim == 0 {
            return fail("embedding_dim must be positive".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if self.mode == ConfigMode::Published {
            let published = Self::published(h, w);
            if self.encoder_channels != published.encoder_channels
                || self.bottleneck_channels != published.bottleneck_channels
                || self.decoder_channels != published.decoder_channels
                || self.kernel != published.kernel
                || self.stride != published.stride
            {
                return fail("published mode requires the published layer configuration".into());
            }
            if self.embedding_dim != PUBLISHED_EMBEDDING_DIM {
                return fail(format!(
                    "published mode requires embedding_dim {PUBLISHED_EMBEDDING_DIM}, got {}",
                    self.embedding_dim
                ));
            }
        }
        Ok(())
    }
}
