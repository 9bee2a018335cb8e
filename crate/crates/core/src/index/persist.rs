//! Index file (`"UCBM"`) and embedding exchange file (`"UEMB"`).
//!
//! Layout: magic, version u32, dim u32, count u64, entries, CRC32 of
//! everything after the version field. Index entries carry id, label and
//! dataset strings (u16 length + UTF-8) then `dim` f32 values; embedding
//! entries carry only the id and the vector.

use std::fs;
use std::path::Path;

use super::{EmbeddingIndex, IndexEntry, IndexError};
use crate::binio::{ReadError, Reader, Writer};
use crate::dataset::Manifest;

pub const INDEX_MAGIC: &[u8; 4] = b"UCBM";
pub const EMBEDDINGS_MAGIC: &[u8; 4] = b"UEMB";
pub const INDEX_VERSION: u32 = 1;
const PREFIX_LEN: usize = 8;

#[derive(Clone, Copy)]
enum Layout {
    Index,
    Embeddings,
}

impl Layout {
    fn magic(self) -> &'static [u8; 4] {
        match self {
            Layout::Index => INDEX_MAGIC,
            Layout::Embeddings => EMBEDDINGS_MAGIC,
        }
    }
}

fn encode(index: &EmbeddingIndex, layout: Layout) -> Result<Vec<u8>, IndexError> {
    let mut body = Writer::new();
    body.u32(index.dim() as u32);
    body.u64(index.len() as u64);
    for e in index.entries() {
        body.str16(&e.id).map_err(IndexError::Corrupt)?;
        if let Layout::Index = layout {
            body.str16(&e.label).map_err(IndexError::Corrupt)?;
            body.str16(&e.dataset_id).map_err(IndexError::Corrupt)?;
        }
        body.f32s(&e.vector);
    }
    let body = body.into_inner();
    let mut out = Writer::new();
    out.bytes(layout.magic());
    out.u32(INDEX_VERSION);
    out.bytes(&body);
    out.u32(crc32fast::hash(&body));
    Ok(out.into_inner())
}

/// Parses the entry section. Returns the entries, the dimension and the
/// number of body bytes consumed.
fn parse_body(body: &[u8], layout: Layout) -> Result<(usize, Vec<IndexEntry>, usize), ReadError> {
    let mut r = Reader::new(body);
    let dim = r.u32()? as usize;
    let count = r.u64()?;
    // Every entry needs at least its id prefix and vector.
    let min_entry = 2 + 4 * dim as u64;
    if count.saturating_mul(min_entry) > body.len() as u64 {
        return Err(ReadError::Truncated);
    }
    let mut entries = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let id = r.str16()?;
        let (label, dataset_id) = match layout {
            Layout::Index => (r.str16()?, r.str16()?),
            Layout::Embeddings => (String::new(), String::new()),
        };
        let vector = r.f32s(dim)?;
        entries.push(IndexEntry { id, label, dataset_id, vector });
    }
    Ok((dim, entries, body.len() - r.remaining()))
}

fn decode(bytes: &[u8], layout: Layout) -> Result<(usize, Vec<IndexEntry>), IndexError> {
    if bytes.len() < 4 {
        return Err(IndexError::Truncated);
    }
    if &bytes[..4] != layout.magic() {
        return Err(IndexError::BadMagic);
    }
    if bytes.len() < PREFIX_LEN {
        return Err(IndexError::Truncated);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != INDEX_VERSION {
        return Err(IndexError::Version { found: version, expected: INDEX_VERSION });
    }
    let rest = &bytes[PREFIX_LEN..];
    let crc_check = (rest.len() >= 4).then(|| {
        let (body, tail) = rest.split_at(rest.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        (stored, crc32fast::hash(body))
    });
    let checksum_err = || match crc_check {
        Some((stored, computed)) if stored != computed => Some(IndexError::Checksum { stored, computed }),
        _ => None,
    };

    match parse_body(rest, layout) {
        Err(ReadError::Truncated) => Err(IndexError::Truncated),
        Err(ReadError::Invalid(msg)) => Err(checksum_err().unwrap_or(IndexError::Corrupt(msg))),
        Ok((dim, entries, used)) => {
            let trailing = rest.len() - used;
            if trailing < 4 {
                return Err(IndexError::Truncated);
            }
            if let Some(e) = checksum_err() {
                return Err(e);
            }
            if trailing > 4 {
                return Err(IndexError::Corrupt(format!("{} unexpected trailing bytes", trailing - 4)));
            }
            Ok((dim, entries))
        }
    }
}

fn build(dim: usize, entries: Vec<IndexEntry>) -> Result<EmbeddingIndex, IndexError> {
    let sorted = entries.windows(2).all(|w| w[0].id < w[1].id);
    let index = EmbeddingIndex::new(dim, entries).map_err(|e| IndexError::Corrupt(e.to_string()))?;
    if !sorted {
        return Err(IndexError::Corrupt("entries are not in canonical id order".into()));
    }
    Ok(index)
}

impl EmbeddingIndex {
    pub fn to_bytes(&self) -> Result<Vec<u8>, IndexError> {
        encode(self, Layout::Index)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let (dim, entries) = decode(bytes, Layout::Index)?;
        build(dim, entries)
    }
}

pub fn save_index(index: &EmbeddingIndex, path: impl AsRef<Path>) -> Result<(), IndexError> {
    fs::write(path, index.to_bytes()?)?;
    Ok(())
}

pub fn load_index(path: impl AsRef<Path>) -> Result<EmbeddingIndex, IndexError> {
    EmbeddingIndex::from_bytes(&fs::read(path)?)
}

/// Writes ids and vectors only; labels come back from a manifest on import.
pub fn export_embeddings(index: &EmbeddingIndex, path: impl AsRef<Path>) -> Result<(), IndexError> {
    fs::write(path, encode(index, Layout::Embeddings)?)?;
    Ok(())
}

/// Builds an index from an external embedding file, joining labels and
/// dataset ids from `manifest`. `expected_dim` rejects vectors of another size.
pub fn import_embeddings(
    path: impl AsRef<Path>,
    manifest: &Manifest,
    expected_dim: Option<usize>,
) -> Result<EmbeddingIndex, IndexError> {
    let (dim, mut entries) = decode(&fs::read(path)?, Layout::Embeddings)?;
    if let Some(expected) = expected_dim {
        if expected != dim {
            return Err(IndexError::DimMismatch { expected, found: dim });
        }
    }
    let by_id: std::collections::HashMap<&str, _> = manifest.records.iter().map(|r| (r.id.as_str(), r)).collect();
    for e in &mut entries {
        let record = by_id.get(e.id.as_str()).ok_or_else(|| IndexError::UnknownId(e.id.clone()))?;
        e.label = record.label.clone();
        e.dataset_id = record.dataset_id.clone();
    }
    EmbeddingIndex::new(dim, entries)
}
