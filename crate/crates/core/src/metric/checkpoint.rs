//! Binary checkpoint container.
//!
//! ```text
//! "ALTM" | u32 version | u64 header_len | header JSON | u64 n_params | n_params × f64 | SHA-256
//! ```
//!
//! Integers and floats are little-endian. The digest covers every preceding
//! byte. The header records the model shape, the tensor table, training
//! progress and the feature-layout version.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{MetricError, ModelParams, ModelShape, TensorSpec};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ALTM";
const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    /// ChaCha word position, serialized as a decimal string.
    #[serde(with = "u128_string")]
    pub word_pos: u128,
}

mod u128_string {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub epoch: usize,
    pub val_loss: f64,
    pub layout_version: String,
    pub rng: RngState,
}

impl Checkpoint {
    pub fn check_layout(&self, expected: &str) -> Result<(), MetricError> {
        if self.layout_version != expected {
            return Err(MetricError::LayoutMismatch { expected: expected.into(), found: self.layout_version.clone() });
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    layout_version: String,
    shape: ModelShape,
    tensors: Vec<TensorSpec>,
    epoch: usize,
    val_loss: f64,
    rng: RngState,
}

fn encode(c: &Checkpoint) -> Vec<u8> {
    let shape = *c.params.shape();
    let header = Header {
        layout_version: c.layout_version.clone(),
        shape,
        tensors: shape.tensors(),
        epoch: c.epoch,
        val_loss: c.val_loss,
        rng: c.rng,
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let values = c.params.as_slice();
    let mut out = Vec::with_capacity(24 + header.len() + 8 * values.len() + DIGEST_LEN);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

fn decode(bytes: &[u8]) -> Result<Checkpoint, MetricError> {
    let corrupt = |m: &str| MetricError::CorruptFile(m.to_string());
    if bytes.len() < 4 + 4 + 8 + 8 + DIGEST_LEN || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(corrupt("not a checkpoint or truncated"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("checksum mismatch"));
    }
    let u32_at = |i: usize| u32::from_le_bytes(body[i..i + 4].try_into().unwrap());
    let u64_at = |i: usize| u64::from_le_bytes(body[i..i + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != FORMAT_VERSION {
        return Err(MetricError::CorruptFile(format!("unsupported format version {version}")));
    }
    let header_len = u64_at(8) as usize;
    let header_end = 16usize.checked_add(header_len).filter(|&e| e + 8 <= body.len()).ok_or_else(|| corrupt("bad header length"))?;
    let header: Header =
        serde_json::from_slice(&body[16..header_end]).map_err(|e| MetricError::CorruptFile(format!("header: {e}")))?;
    let count = u64_at(header_end) as usize;
    let blob = &body[header_end + 8..];
    if Some(blob.len()) != count.checked_mul(8) {
        return Err(corrupt("parameter blob length"));
    }
    if header.tensors != header.shape.tensors() {
        return Err(corrupt("tensor table does not match shape"));
    }
    let values: Vec<f64> = blob.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let params = ModelParams::from_vec(header.shape, values).map_err(|e| MetricError::CorruptFile(e.to_string()))?;
    Ok(Checkpoint {
        params,
        epoch: header.epoch,
        val_loss: header.val_loss,
        layout_version: header.layout_version,
        rng: header.rng,
    })
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn save_checkpoint(c: &Checkpoint, path: impl AsRef<Path>) -> Result<(), MetricError> {
    let path = path.as_ref();
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| MetricError::InvalidConfig(format!("bad path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&encode(c))?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a checkpoint without checking its feature layout.
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, MetricError> {
    decode(&std::fs::read(path)?)
}

/// Reads a checkpoint and refuses it unless it was trained on `layout_version`.
pub fn load_checkpoint(path: impl AsRef<Path>, layout_version: &str) -> Result<Checkpoint, MetricError> {
    let c = read_checkpoint(path)?;
    c.check_layout(layout_version)?;
    Ok(c)
}
