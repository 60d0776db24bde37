//! Self-describing model checkpoint container.
//!
//! ```text
//! magic "R2WCKPT\0" | version u32 | header_len u64 | header (JSON) | tensor payload
//! ```
//! The JSON header echoes the model config, the step counter, the layer-spec
//! stamp, optimizer/RNG state and an index of the tensors in the payload
//! (name, shape, dtype, byte offset). Payload values are little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binfmt::{atomic_write, Cursor};
use crate::error::{Error, IoContext, Result};
use crate::nn::{HostData, HostTensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"R2WCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct Header {
    kind: String,
    step: u64,
    layer_tag: String,
    config: serde_json::Value,
    state: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// "vocoder" or "acoustic"
    pub kind: String,
    pub step: u64,
    /// Layer-spec stamp shared by compatible acoustic/vocoder pairs.
    pub layer_tag: String,
    pub config: serde_json::Value,
    /// Optimizer scalars, RNG state and other trainer bookkeeping.
    pub state: serde_json::Value,
    pub tensors: Vec<HostTensor>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut payload = Vec::new();
        let mut entries = Vec::with_capacity(self.tensors.len());
        for t in &self.tensors {
            let (dtype, offset) = (
                match t.data {
                    HostData::F32(_) => "f32",
                    HostData::F64(_) => "f64",
                },
                payload.len() as u64,
            );
            match &t.data {
                HostData::F32(v) => v.iter().for_each(|x| payload.extend_from_slice(&x.to_le_bytes())),
                HostData::F64(v) => v.iter().for_each(|x| payload.extend_from_slice(&x.to_le_bytes())),
            }
            entries.push(TensorEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
                dtype: dtype.into(),
                offset,
            });
        }
        let header = serde_json::to_vec(&Header {
            kind: self.kind.clone(),
            step: self.step,
            layer_tag: self.layer_tag.clone(),
            config: self.config.clone(),
            state: self.state.clone(),
            tensors: entries,
        })?;
        let mut bytes = Vec::with_capacity(20 + header.len() + payload.len());
        bytes.extend_from_slice(CHECKPOINT_MAGIC);
        bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&header);
        bytes.extend_from_slice(&payload);
        atomic_write(path, &bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).with_path("read checkpoint", path)?;
        let mut cur = Cursor::new(&bytes, path);
        if cur.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::corrupt(path, "not a checkpoint (bad magic)"));
        }
        let version = cur.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                path: path.to_path_buf(),
                expected: CHECKPOINT_VERSION,
                found: version,
            });
        }
        let header_len = cur.u64()? as usize;
        let header: Header = serde_json::from_slice(cur.take(header_len)?)
            .map_err(|e| Error::corrupt(path, format!("header: {e}")))?;
        let payload = cur.take(cur.remaining())?;
        let tensors = header
            .tensors
            .iter()
            .map(|e| {
                let n: usize = e.shape.iter().product();
                let width = match e.dtype.as_str() {
                    "f32" => 4,
                    "f64" => 8,
                    other => return Err(Error::corrupt(path, format!("tensor {}: dtype {other}", e.name))),
                };
                let start = e.offset as usize;
                let end = start
                    .checked_add(n * width)
                    .filter(|&end| end <= payload.len())
                    .ok_or_else(|| Error::corrupt(path, format!("tensor {} out of bounds", e.name)))?;
                let mut c = Cursor::new(&payload[start..end], path);
                let data = if width == 4 {
                    HostData::F32(c.f32_vec(n)?)
                } else {
                    HostData::F64(c.f64_vec(n)?)
                };
                Ok(HostTensor {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                    data,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind: header.kind,
            step: header.step,
            layer_tag: header.layer_tag,
            config: header.config,
            state: header.state,
            tensors,
        })
    }

    /// Loads and checks the model kind.
    pub fn load_kind(path: &Path, kind: &str) -> Result<Self> {
        let ckpt = Self::load(path)?;
        if ckpt.kind != kind {
            return Err(Error::Config(format!(
                "{} is a {} checkpoint, expected {kind}",
                path.display(),
                ckpt.kind
            )));
        }
        Ok(ckpt)
    }

    pub fn tensors_with_prefix(&self, prefix: &str) -> Vec<HostTensor> {
        self.tensors
            .iter()
            .filter_map(|t| {
                t.name.strip_prefix(prefix).map(|rest| HostTensor {
                    name: rest.to_string(),
                    ..t.clone()
                })
            })
            .collect()
    }
}
