use std::path::Path;

use serde::{Deserialize, Serialize};

use super::policy::{Block, Dims, ToyPolicyParams};
use super::vocab::Vocab;
use super::PolicyError;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TMRBCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Offset into the parameter section, in f64 elements.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    dims: Dims,
    vocab: Vocab,
    blocks: Vec<BlockEntry>,
    meta: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ToyPolicyParams,
    pub vocab: Vocab,
    /// Free-form run information (resolved config, history).
    pub meta: serde_json::Value,
}

/// Layout: magic, u32 LE version, u64 LE header length, JSON header, then
/// little-endian f64 parameters in the block order the header lists.
pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let dims = ckpt.params.dims();
    let blocks = Block::ALL
        .iter()
        .map(|b| {
            let (rows, cols) = b.shape(dims);
            BlockEntry {
                name: b.name().into(),
                rows,
                cols,
                offset: ckpt.params.offset(*b),
            }
        })
        .collect();
    let header = Header {
        version: CHECKPOINT_VERSION,
        dims,
        vocab: ckpt.vocab.clone(),
        blocks,
        meta: ckpt.meta.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(20 + json.len() + 8 * ckpt.params.data().len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in ckpt.params.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, PolicyError> {
    let bad = |m: String| PolicyError::Checkpoint(m);
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(20..20usize.saturating_add(hlen))
        .ok_or_else(|| bad("truncated header".into()))?;
    let header: Header =
        serde_json::from_slice(body).map_err(|e| bad(format!("bad header: {e}")))?;
    if header.dims.vocab != header.vocab.len() {
        return Err(bad(format!(
            "vocab has {} tokens but dims say {}",
            header.vocab.len(),
            header.dims.vocab
        )));
    }
    let raw = &bytes[20 + hlen..];
    if raw.len() % 8 != 0 {
        return Err(bad("parameter section is not a whole number of f64s".into()));
    }
    let flat: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let mut params = ToyPolicyParams::zeros(header.dims);
    if flat.len() != params.data().len() {
        return Err(bad(format!(
            "{} parameters, expected {}",
            flat.len(),
            params.data().len()
        )));
    }
    for entry in &header.blocks {
        let block = Block::from_name(&entry.name)
            .ok_or_else(|| bad(format!("unknown block {:?}", entry.name)))?;
        if (entry.rows, entry.cols) != block.shape(header.dims) {
            return Err(bad(format!("block {} has the wrong shape", entry.name)));
        }
        let n = entry.rows * entry.cols;
        let src = flat
            .get(entry.offset..entry.offset + n)
            .ok_or_else(|| bad(format!("block {} out of range", entry.name)))?;
        params.block_mut(block).copy_from_slice(src);
    }
    if header.blocks.len() != Block::ALL.len() {
        return Err(bad("checkpoint is missing parameter blocks".into()));
    }
    let params = ToyPolicyParams::from_data(header.dims, params.data().to_vec())?;
    Ok(Checkpoint {
        params,
        vocab: header.vocab,
        meta: header.meta,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), PolicyError> {
    std::fs::write(path, encode_checkpoint(ckpt)).map_err(|source| PolicyError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, PolicyError> {
    let bytes = std::fs::read(path).map_err(|source| PolicyError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_checkpoint(&bytes)
}
