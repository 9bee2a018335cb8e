//! Seeded oriented-sinusoid textures standing in for stained tissue patches.
//!
//! Class `c` of `C` has orientation `c·π/C` and its own spatial frequency,
//! so the classes are separable in raw pixel space.

use std::collections::BTreeMap;
use std::f32::consts::{FRAC_PI_2, PI};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::decode::{encode_png, tensor_to_rgb};
use super::{DatasetError, Manifest, PatchRecord, Split};
use crate::numerics::{Shape, Tensor};

/// Per-channel mean and sinusoid amplitude (pink/purple, H&E-like).
const CHANNEL_MEAN: [f32; 3] = [0.62, 0.42, 0.62];
const CHANNEL_AMPLITUDE: [f32; 3] = [0.15, 0.22, 0.12];
pub const NOISE_SIGMA: f32 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    /// Square side length; divisible by 32.
    pub size: usize,
    /// Added to the red channel before clipping (0 for none).
    pub red_shift: f32,
    pub dataset_id: String,
}

impl SyntheticSpec {
    pub fn new(classes: usize, per_class: usize, size: usize) -> Self {
        Self { classes, per_class, size, red_shift: 0.0, dataset_id: "synthetic".into() }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::Spec(m));
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.per_class < 10 {
            return bad(format!("need at least 10 images per class, got {}", self.per_class));
        }
        if self.size == 0 || !self.size.is_multiple_of(32) {
            return bad(format!("size {} is not a positive multiple of 32", self.size));
        }
        Ok(())
    }
}

pub fn class_label(class: usize) -> String {
    format!("class{class}")
}

/// Cycles per image width; stays below Nyquist for 32-pixel images.
fn class_frequency(class: usize) -> f32 {
    3.0 + 2.0 * (class % 6) as f32
}

/// Renders one texture from its own RNG stream.
pub fn synthetic_image(spec: &SyntheticSpec, class: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let n = spec.size;
    let theta = class as f32 * PI / spec.classes as f32;
    let (dx, dy) = (theta.cos(), theta.sin());
    let omega = 2.0 * PI * class_frequency(class) / n as f32;
    let phase = rng.random_range(0.0..FRAC_PI_2);
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("positive sigma");
    let plane = n * n;
    let mut data = vec![0.0f32; 3 * plane];
    for y in 0..n {
        for x in 0..n {
            let s = (omega * (x as f32 * dx + y as f32 * dy) + phase).sin();
            for c in 0..3 {
                let shift = if c == 0 { spec.red_shift } else { 0.0 };
                let v = CHANNEL_MEAN[c] + CHANNEL_AMPLITUDE[c] * s + noise.sample(rng) + shift;
                data[c * plane + y * n + x] = v.clamp(0.0, 1.0);
            }
        }
    }
    Tensor::from_vec(Shape::new(1, 3, n, n), data).expect("length matches shape")
}

fn stream_seed(seed: u64, class: usize, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((class as u64) << 32 | index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Split of each within-class index: a seeded shuffle, then 70/10/20.
pub fn assign_splits(per_class: usize, seed: u64, class: usize) -> Vec<Split> {
    use rand::seq::SliceRandom;
    let n_train = (per_class as f64 * 0.7).round() as usize;
    let n_val = (per_class as f64 * 0.1).round() as usize;
    let mut order: Vec<usize> = (0..per_class).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(stream_seed(seed, class, usize::MAX >> 32)));
    let mut splits = vec![Split::Test; per_class];
    for (rank, &i) in order.iter().enumerate() {
        if rank < n_train {
            splits[i] = Split::Train;
        } else if rank < n_train + n_val {
            splits[i] = Split::Val;
        }
    }
    splits
}

/// Writes `images/<id>.png` and `manifest.csv` under `out_dir`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64, out_dir: &Path) -> Result<Manifest, DatasetError> {
    spec.validate()?;
    let img_dir = out_dir.join("images");
    fs::create_dir_all(&img_dir).map_err(|e| DatasetError::io(&img_dir, e))?;

    let jobs: Vec<(usize, usize, Split)> = (0..spec.classes)
        .flat_map(|c| assign_splits(spec.per_class, seed, c).into_iter().enumerate().map(move |(i, s)| (c, i, s)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(class, index, split)| {
            let id = format!("{}_{}_{index:04}", spec.dataset_id, class_label(class));
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, class, index));
            let img = synthetic_image(spec, class, &mut rng);
            let path = img_dir.join(format!("{id}.png"));
            fs::write(&path, encode_png(&tensor_to_rgb(&img))).map_err(|e| DatasetError::io(&path, e))?;
            Ok(PatchRecord { id, path, label: class_label(class), split, dataset_id: spec.dataset_id.clone() })
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;

    let metadata = BTreeMap::from([
        ("generator".to_string(), "oriented-sinusoid".to_string()),
        ("patch_size".to_string(), format!("{0}x{0}", spec.size)),
        ("seed".to_string(), seed.to_string()),
        ("red_shift".to_string(), spec.red_shift.to_string()),
    ]);
    let manifest = Manifest { records, metadata };
    manifest.save(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}
