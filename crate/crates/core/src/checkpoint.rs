//! Binary checkpoints with exact-resume semantics.
//!
//! Little-endian layout: magic `PRAE`, u32 version, u32 header length, a
//! JSON header (model spec, epoch, best-metric record, RNG state, optimizer
//! hyperparameters and step counts, tensor manifest), then one
//! u64-length-prefixed f32 blob per tensor in declaration order, and a
//! trailing CRC-32 over everything after the magic. A failed checksum or
//! truncated file loads nothing.

use std::fs;
use std::io::Read;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{build_model, Model, ModelSpec, ParamKind};
use crate::error::{Error, Result};
use crate::optim::{AdamParams, AdamState, ModelOptimizer};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"PRAE";
pub const VERSION: u32 = 1;
/// Weight-init convention recorded for reproducibility: He normal before
/// ReLU, uniform Xavier on un-activated output layers.
pub const INIT_SCHEME: &str = "he-normal+xavier-uniform-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestRecord {
    pub epoch: u32,
    pub metric: String,
    pub value: f64,
}

/// Snapshot of a counter-based RNG: seed plus stream position.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub word_pos_hi: u64,
    pub word_pos_lo: u64,
}

impl RngState {
    pub fn capture(seed: u64, rng: &ChaCha8Rng) -> Self {
        let pos = rng.get_word_pos();
        RngState {
            seed,
            word_pos_hi: (pos >> 64) as u64,
            word_pos_lo: pos as u64,
        }
    }

    pub fn fresh(seed: u64) -> Self {
        Self::capture(seed, &ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_word_pos(((self.word_pos_hi as u128) << 64) | self.word_pos_lo as u128);
        rng
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epoch: u32,
    pub best: Option<BestRecord>,
    pub rng: RngState,
}

#[derive(Serialize, Deserialize)]
struct AdamMeta {
    hyper: AdamParams,
    steps: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    init_scheme: String,
    epoch: u32,
    best: Option<BestRecord>,
    rng: RngState,
    adam: Option<AdamMeta>,
    tensors: Vec<TensorEntry>,
}

pub struct LoadedCheckpoint {
    pub model: Model,
    pub optimizer: Option<ModelOptimizer>,
    pub meta: TrainMeta,
}

pub fn save_checkpoint(path: &Path, model: &Model, optimizer: Option<&ModelOptimizer>, meta: &TrainMeta) -> Result<()> {
    let named = model.named_tensors();
    let mut entries: Vec<TensorEntry> = named
        .iter()
        .map(|t| TensorEntry {
            name: t.name.clone(),
            shape: t.tensor.shape().to_vec(),
        })
        .collect();
    let mut blobs: Vec<&Tensor> = named.iter().map(|t| t.tensor).collect();

    let adam = optimizer.map(|opt| {
        let trainable: Vec<&str> = named
            .iter()
            .filter(|t| t.kind == ParamKind::Trainable)
            .map(|t| t.name.as_str())
            .collect();
        for (name, state) in trainable.iter().zip(&opt.states) {
            for (suffix, tensor) in [("m", &state.m), ("v", &state.v)] {
                entries.push(TensorEntry {
                    name: format!("adam.{suffix}.{name}"),
                    shape: tensor.shape().to_vec(),
                });
                blobs.push(tensor);
            }
        }
        AdamMeta {
            hyper: opt.states.first().map(|s| s.hyper).unwrap_or(AdamParams::with_lr(0.0)),
            steps: opt.states.iter().map(|s| s.step).collect(),
        }
    });

    let header = Header {
        spec: model.spec.clone(),
        init_scheme: INIT_SCHEME.to_string(),
        epoch: meta.epoch,
        best: meta.best.clone(),
        rng: meta.rng,
        adam,
        tensors: entries,
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(format!("header encode: {e}")))?;

    let mut payload = Vec::new();
    payload.extend_from_slice(&VERSION.to_le_bytes());
    payload.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    payload.extend_from_slice(&header_json);
    for tensor in blobs {
        payload.extend_from_slice(&((tensor.len() * 4) as u64).to_le_bytes());
        for v in tensor.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&payload);

    let mut bytes = Vec::with_capacity(4 + payload.len() + 4);
    bytes.extend_from_slice(&MAGIC);
    bytes.extend_from_slice(&payload);
    bytes.extend_from_slice(&crc.to_le_bytes());
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<LoadedCheckpoint> {
    let err = |msg: String| Error::Checkpoint(format!("{}: {msg}", path.display()));
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 {
        return Err(err("truncated file".into()));
    }
    if bytes[..4] != MAGIC {
        return Err(err("bad magic".into()));
    }
    let payload = &bytes[4..bytes.len() - 4];
    let stored_crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if crc32fast::hash(payload) != stored_crc {
        return Err(err("checksum mismatch".into()));
    }
    let version = u32::from_le_bytes(payload[0..4].try_into().unwrap());
    if version != VERSION {
        return Err(err(format!("unsupported version {version}")));
    }
    let header_len = u32::from_le_bytes(payload[4..8].try_into().unwrap()) as usize;
    if payload.len() < 8 + header_len {
        return Err(err("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&payload[8..8 + header_len])
        .map_err(|e| err(format!("header decode: {e}")))?;

    // Read blobs in declaration order.
    let mut off = 8 + header_len;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in &header.tensors {
        if payload.len() < off + 8 {
            return Err(err(format!("truncated before blob {}", entry.name)));
        }
        let blob_len = u64::from_le_bytes(payload[off..off + 8].try_into().unwrap()) as usize;
        off += 8;
        let expect: usize = entry.shape.iter().product::<usize>() * 4;
        if blob_len != expect {
            return Err(err(format!(
                "blob {} is {blob_len} bytes, shape {:?} implies {expect}",
                entry.name, entry.shape
            )));
        }
        if payload.len() < off + blob_len {
            return Err(err(format!("truncated inside blob {}", entry.name)));
        }
        let data: Vec<f32> = payload[off..off + blob_len]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        off += blob_len;
        tensors.push(Tensor::from_vec(&entry.shape, data)?);
    }
    if off != payload.len() {
        return Err(err("trailing bytes after the last blob".into()));
    }

    // Rebuild the layer skeleton from the spec, then overwrite every tensor.
    let mut model = build_model(header.spec.encoder, header.spec.decoder.clone(), 0)?;
    let mut iter = header.tensors.iter().zip(tensors);
    {
        let mut slots = model.named_tensors_mut();
        for slot in slots.iter_mut() {
            let (entry, tensor) = iter
                .next()
                .ok_or_else(|| err("header lists fewer tensors than the model layout".into()))?;
            if entry.name != slot.name {
                return Err(err(format!("tensor {} where {} was expected", entry.name, slot.name)));
            }
            if tensor.shape() != slot.tensor.shape() {
                return Err(err(format!(
                    "tensor {} has shape {:?}, layout expects {:?}",
                    entry.name,
                    tensor.shape(),
                    slot.tensor.shape()
                )));
            }
            *slot.tensor = tensor;
        }
    }

    let optimizer = match header.adam {
        None => {
            if iter.next().is_some() {
                return Err(err("optimizer tensors present without optimizer metadata".into()));
            }
            None
        }
        Some(meta) => {
            let mut states = Vec::with_capacity(meta.steps.len());
            for step in meta.steps {
                let (m_entry, m) = iter.next().ok_or_else(|| err("missing optimizer moment blob".into()))?;
                let (v_entry, v) = iter.next().ok_or_else(|| err("missing optimizer moment blob".into()))?;
                if !m_entry.name.starts_with("adam.m.") || !v_entry.name.starts_with("adam.v.") {
                    return Err(err(format!(
                        "unexpected optimizer tensors {} / {}",
                        m_entry.name, v_entry.name
                    )));
                }
                states.push(AdamState {
                    step,
                    m,
                    v,
                    hyper: meta.hyper,
                });
            }
            if iter.next().is_some() {
                return Err(err("more tensors than the header accounts for".into()));
            }
            Some(ModelOptimizer { states })
        }
    };

    Ok(LoadedCheckpoint {
        model,
        optimizer,
        meta: TrainMeta {
            epoch: header.epoch,
            best: header.best,
            rng: header.rng,
        },
    })
}

/// The stored CRC-32, for cheap identity comparison between checkpoints.
pub fn checkpoint_crc(path: &Path) -> Result<u32> {
    let bytes = fs::read(path)?;
    if bytes.len() < 16 || bytes[..4] != MAGIC {
        return Err(Error::Checkpoint(format!("{}: not a checkpoint", path.display())));
    }
    Ok(u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap()))
}
