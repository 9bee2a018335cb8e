//! The embedding index: exact top-K search under Euclidean or cosine distance.

mod distance;
mod persist;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{decode_records, DatasetError, Manifest, PatchRecord, Split};
use crate::model::{embedding_rows, CaeModel, ModelError};
use crate::numerics::Tensor;

pub use distance::{cosine_distance, euclidean};
pub use persist::{
    export_embeddings, import_embeddings, load_index, save_index, EMBEDDINGS_MAGIC, INDEX_MAGIC, INDEX_VERSION,
};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("vector length {found} does not match index dimension {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("cosine distance is undefined for a zero vector")]
    ZeroVector,
    #[error("non-finite value in vector `{0}`")]
    NonFinite(String),
    #[error("k = {k} is out of range 1..={available}")]
    KOutOfRange { k: usize, available: usize },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("id `{0}` is not in the manifest")]
    UnknownId(String),
    #[error("{0}")]
    Empty(String),
    #[error("index I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("not an index file (bad magic)")]
    BadMagic,
    #[error("unsupported index version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("index file truncated")]
    Truncated,
    #[error("index checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("corrupt index: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Cosine,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
        }
    }

    pub fn distance(self, a: &[f32], b: &[f32]) -> Result<f64, IndexError> {
        match self {
            Metric::Euclidean => euclidean(a, b),
            Metric::Cosine => cosine_distance(a, b),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" | "l2" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(format!("unknown metric `{other}` (expected euclidean or cosine)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub id: String,
    pub label: String,
    pub dataset_id: String,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: String,
    pub label: String,
    pub distance: f64,
}

/// Ranked neighbours of one query: distance ascending, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query_id: String,
    pub hits: Vec<Hit>,
}

impl RetrievalResult {
    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.hits.iter().map(|h| h.label.as_str())
    }
}

/// Total order used for ranking.
pub fn rank_order(a: (f64, &str), b: (f64, &str)) -> Ordering {
    a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1))
}

/// Immutable set of embeddings, kept sorted by id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    dim: usize,
    entries: Vec<IndexEntry>,
}

impl EmbeddingIndex {
    /// Validates and sorts `entries`; input order does not matter.
    pub fn new(dim: usize, mut entries: Vec<IndexEntry>) -> Result<Self, IndexError> {
        for e in &entries {
            if e.vector.len() != dim {
                return Err(IndexError::DimMismatch { expected: dim, found: e.vector.len() });
            }
            if !e.vector.iter().all(|v| v.is_finite()) {
                return Err(IndexError::NonFinite(e.id.clone()));
            }
        }
        entries.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = entries.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(IndexError::DuplicateId(w[0].id.clone()));
        }
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&IndexEntry> {
        self.entries.binary_search_by(|e| e.id.as_str().cmp(id)).ok().map(|i| &self.entries[i])
    }

    /// Entry count per label.
    pub fn label_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.label.clone()).or_insert(0) += 1;
        }
        counts
    }

    /// The `k` nearest entries to `query`, skipping the entry whose id is `exclude`.
    pub fn top_k(
        &self,
        query_id: &str,
        query: &[f32],
        k: usize,
        metric: Metric,
        exclude: Option<&str>,
    ) -> Result<RetrievalResult, IndexError> {
        if query.len() != self.dim {
            return Err(IndexError::DimMismatch { expected: self.dim, found: query.len() });
        }
        let mut scored: Vec<(f64, usize)> = Vec::with_capacity(self.entries.len());
        for (i, e) in self.entries.iter().enumerate() {
            if exclude == Some(e.id.as_str()) {
                continue;
            }
            scored.push((metric.distance(query, &e.vector)?, i));
        }
        if k == 0 || k > scored.len() {
            return Err(IndexError::KOutOfRange { k, available: scored.len() });
        }
        // Entries are sorted by id, so comparing positions breaks ties by id.
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_unstable_by(cmp);
        Ok(RetrievalResult {
            query_id: query_id.to_string(),
            hits: scored
                .into_iter()
                .map(|(distance, i)| Hit {
                    id: self.entries[i].id.clone(),
                    label: self.entries[i].label.clone(),
                    distance,
                })
                .collect(),
        })
    }
}

/// Records decoded and encoded per chunk to bound memory.
const ENCODE_CHUNK: usize = 64;

/// Embeds records in order; rows match `records`.
pub fn embed_records(model: &CaeModel, records: &[&PatchRecord]) -> Result<Vec<Vec<f32>>, IndexError> {
    let size = model.config.input_size;
    let mut rows = Vec::with_capacity(records.len());
    for chunk in records.chunks(ENCODE_CHUNK) {
        let batch = decode_records(chunk, size)?;
        rows.extend(embedding_rows(&model.encode(&batch)?));
    }
    Ok(rows)
}

/// Embeds already-decoded images (`N × 3 × H × W`).
pub fn embed_images(model: &CaeModel, images: &Tensor) -> Result<Vec<Vec<f32>>, IndexError> {
    let n = images.shape().n;
    let mut rows = Vec::with_capacity(n);
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(ENCODE_CHUNK) {
        rows.extend(embedding_rows(&model.encode(&images.select(chunk).map_err(ModelError::from)?)?));
    }
    Ok(rows)
}

/// One entry per record of the selected splits (train and val by default).
pub fn build_index(model: &CaeModel, manifest: &Manifest, splits: &[Split]) -> Result<EmbeddingIndex, IndexError> {
    let records = manifest.in_splits(splits);
    if records.is_empty() {
        let names: Vec<&str> = splits.iter().map(|s| s.as_str()).collect();
        return Err(IndexError::Empty(format!("no records in splits [{}]", names.join(", "))));
    }
    let vectors = embed_records(model, &records)?;
    let entries = records
        .iter()
        .zip(vectors)
        .map(|(r, vector)| IndexEntry {
            id: r.id.clone(),
            label: r.label.clone(),
            dataset_id: r.dataset_id.clone(),
            vector,
        })
        .collect();
    EmbeddingIndex::new(model.embedding_dim(), entries)
}
