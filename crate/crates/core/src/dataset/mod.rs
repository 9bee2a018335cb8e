//! Manifest ingestion, patch decoding, histogram matching and the
//! synthetic texture generator.

mod decode;
mod histogram;
mod manifest;
mod synthetic;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use decode::{
    decode_image_bytes, decode_patch, decode_records, encode_png, quantize, rgb_to_tensor, tensor_to_rgb,
};
pub use histogram::{histogram_match, ChannelCdf, BINS};
pub use manifest::{load_manifest, Manifest, PatchRecord, Split, MANIFEST_HEADER};
pub use synthetic::{assign_splits, class_label, generate_synthetic, synthetic_image, SyntheticSpec, NOISE_SIGMA};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("manifest line {line}: {message}")]
    Manifest { line: u64, message: String },
    #[error("record `{id}`: {message}")]
    Decode { id: String, message: String },
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("{0}")]
    Empty(String),
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
}

impl DatasetError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        DatasetError::Io { path: path.to_path_buf(), message: e.to_string() }
    }
}

/// Pooled per-channel CDF over all pixels of the decoded records.
pub fn build_reference_cdf(records: &[&PatchRecord], size: (usize, usize)) -> Result<ChannelCdf, DatasetError> {
    if records.is_empty() {
        return Err(DatasetError::Empty("reference set is empty".into()));
    }
    let images = decode_records(records, size)?;
    ChannelCdf::from_images([&images])
}
