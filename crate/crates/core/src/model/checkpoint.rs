//! Binary checkpoint: `"UCAE"`, version u32, payload length u64, payload, CRC32.
//!
//! The payload holds the config block, training progress, the parameter
//! blocks (each prefixed with its u16-length name) and the Adam moments,
//! all little-endian with f32 tensors.

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{build_cae, CaeConfig, CaeModel, ConfigMode, TrainState};
use crate::binio::{ReadError, Reader, Writer};
use crate::numerics::{AdamConfig, AdamState};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"UCAE";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("checkpoint checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

/// A model together with its optimizer state and training progress.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: CaeModel,
    pub state: TrainState,
}

fn write_list(w: &mut Writer, values: &[usize]) {
    w.u32(values.len() as u32);
    for &v in values {
        w.u32(v as u32);
    }
}

fn read_list(r: &mut Reader<'_>) -> Result<Vec<usize>, ReadError> {
    let n = r.u32()? as usize;
    if n > 64 {
        return Err(ReadError::Invalid(format!("implausible layer count {n}")));
    }
    (0..n).map(|_| Ok(r.u32()? as usize)).collect()
}

fn write_config(w: &mut Writer, c: &CaeConfig) {
    w.u8(match c.mode {
        ConfigMode::Published => 0,
        ConfigMode::Experimental => 1,
    });
    w.u32(c.input_size.0 as u32);
    w.u32(c.input_size.1 as u32);
    write_list(w, &c.encoder_channels);
    write_list(w, &c.bottleneck_channels);
    write_list(w, &c.decoder_channels);
    for v in [c.embedding_dim, c.kernel, c.stride, c.bottleneck_stride, c.epochs, c.batch_size] {
        w.u32(v as u32);
    }
    w.u64(c.seed);
    for v in [c.adam.lr, c.adam.beta1, c.adam.beta2, c.adam.epsilon] {
        w.f64(v);
    }
}

fn read_config(r: &mut Reader<'_>) -> Result<CaeConfig, ReadError> {
    let mode = match r.u8()? {
        0 => ConfigMode::Published,
        1 => ConfigMode::Experimental,
        m => return Err(ReadError::Invalid(format!("unknown config mode {m}"))),
    };
    let input_size = (r.u32()? as usize, r.u32()? as usize);
    let encoder_channels = read_list(r)?;
    let bottleneck_channels = read_list(r)?;
    let decoder_channels = read_list(r)?;
    let mut u = [0usize; 6];
    for v in &mut u {
        *v = r.u32()? as usize;
    }
    let seed = r.u64()?;
    let adam = AdamConfig { lr: r.f64()?, beta1: r.f64()?, beta2: r.f64()?, epsilon: r.f64()? };
    Ok(CaeConfig {
        mode,
        input_size,
        encoder_channels,
        bottleneck_channels,
        decoder_channels,
        embedding_dim: u[0],
        kernel: u[1],
        stride: u[2],
        bottleneck_stride: u[3],
        epochs: u[4],
        batch_size: u[5],
        seed,
        adam,
    })
}

impl Checkpoint {
    pub fn new(model: CaeModel, state: TrainState) -> Self {
        Self { model, state }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CheckpointError> {
        let mut p = Writer::new();
        write_config(&mut p, &self.model.config);
        p.u32(self.state.epoch as u32);
        p.u32(self.state.loss_history.len() as u32);
        for &l in &self.state.loss_history {
            p.f64(l);
        }
        let tensors = self.model.params.tensors();
        p.u32(tensors.len() as u32);
        for (name, values) in &tensors {
            p.str16(name).map_err(CheckpointError::Corrupt)?;
            p.u64(values.len() as u64);
            p.f32s(values);
        }
        let adam = &self.state.adam;
        if adam.m.len() != tensors.len() || adam.v.len() != tensors.len() {
            return Err(CheckpointError::Corrupt("optimizer state does not match parameters".into()));
        }
        p.u64(adam.step);
        for (m, v) in adam.m.iter().zip(&adam.v) {
            p.f32s(m);
            p.f32s(v);
        }

        let payload = p.into_inner();
        let mut out = Writer::new();
        out.bytes(CHECKPOINT_MAGIC);
        out.u32(CHECKPOINT_VERSION);
        out.u64(payload.len() as u64);
        out.bytes(&payload);
        out.u32(crc32fast::hash(&payload));
        Ok(out.into_inner())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(if bytes.len() < 4 {
                CheckpointError::Truncated { expected: HEADER_LEN, found: bytes.len() }
            } else {
                CheckpointError::BadMagic
            });
        }
        if bytes.len() < HEADER_LEN {
            return Err(CheckpointError::Truncated { expected: HEADER_LEN, found: bytes.len() });
        }
        let mut r = Reader::new(&bytes[4..HEADER_LEN]);
        let version = r.u32().expect("header length checked");
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version { found: version, expected: CHECKPOINT_VERSION });
        }
        let payload_len = r.u64().expect("header length checked");
        let expected = usize::try_from(payload_len)
            .ok()
            .and_then(|n| n.checked_add(HEADER_LEN + 4))
            .ok_or_else(|| CheckpointError::Corrupt(format!("implausible payload length {payload_len}")))?;
        if bytes.len() < expected {
            return Err(CheckpointError::Truncated { expected, found: bytes.len() });
        }
        if bytes.len() > expected {
            return Err(CheckpointError::Corrupt(format!("{} trailing bytes after checksum", bytes.len() - expected)));
        }
        let payload = &bytes[HEADER_LEN..expected - 4];
        let stored = u32::from_le_bytes(bytes[expected - 4..].try_into().expect("4 bytes"));
        let computed = crc32fast::hash(payload);
        if stored != computed {
            return Err(CheckpointError::Checksum { stored, computed });
        }
        Self::parse_payload(payload).map_err(|e| match e {
            ReadError::Truncated => CheckpointError::Corrupt("payload shorter than its contents".into()),
            ReadError::Invalid(msg) => CheckpointError::Corrupt(msg),
        })
    }

    fn parse_payload(payload: &[u8]) -> Result<Self, ReadError> {
        let mut r = Reader::new(payload);
        let config = read_config(&mut r)?;
        let epoch = r.u32()? as usize;
        let history_len = r.u32()? as usize;
        let loss_history = (0..history_len).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;

        // Seed 0: every tensor is overwritten below.
        let mut model: CaeModel =
            build_cae(config, 0).map_err(|e| ReadError::Invalid(format!("stored config rejected: {e}")))?;
        let count = r.u32()? as usize;
        let mut slots = model.params.tensors_mut();
        if count != slots.len() {
            return Err(ReadError::Invalid(format!("{count} parameter blocks, architecture needs {}", slots.len())));
        }
        let mut lens = Vec::with_capacity(count);
        for (want, dst) in slots.iter_mut() {
            let name = r.str16()?;
            if &name != want {
                return Err(ReadError::Invalid(format!("parameter block `{name}` where `{want}` expected")));
            }
            let len = r.u64()? as usize;
            if len != dst.len() {
                return Err(ReadError::Invalid(format!("`{name}` has {len} values, architecture needs {}", dst.len())));
            }
            dst.copy_from_slice(&r.f32s(len)?);
            lens.push(len);
        }
        drop(slots);

        let mut adam = AdamState::new(model.config.adam, &lens);
        adam.step = r.u64()?;
        for (i, &len) in lens.iter().enumerate() {
            adam.m[i] = r.f32s(len)?;
            adam.v[i] = r.f32s(len)?;
        }
        if r.remaining() != 0 {
            return Err(ReadError::Invalid(format!("{} unread payload bytes", r.remaining())));
        }
        Ok(Self { model, state: TrainState { adam, epoch, loss_history } })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

pub fn save_checkpoint(model: &CaeModel, state: &TrainState, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    Checkpoint::new(model.clone(), state.clone()).save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(CaeModel, TrainState), CheckpointError> {
    let ck = Checkpoint::load(path)?;
    Ok((ck.model, ck.state))
}
