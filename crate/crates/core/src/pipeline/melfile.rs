//! `R2WMEL1` tensor file.
//!
//! ```text
//! offset  size  field
//! 0       8     magic "R2WMEL1\0"
//! 8       4     dtype code (u32, 1 = float32)
//! 12      4     n_frames (u32)
//! 16      4     n_mels (u32)
//! 20      4     hop_size (u32)
//! 24      4     sample_rate (u32)
//! 28      ...   n_frames * n_mels float32 log-mel values, row-major
//! ```
//! All fields little-endian.

use std::path::Path;

use ndarray::Array2;

use crate::binfmt::{atomic_write, Cursor};
use crate::error::{Error, IoContext, Result};

pub const MEL_MAGIC: &[u8; 8] = b"R2WMEL1\0";
const DTYPE_F32: u32 = 1;

/// Log-mel frames as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFile {
    pub frames: Array2<f32>,
    pub hop_size: u32,
    pub sample_rate: u32,
}

pub fn persist_mel(mel: &MelFile, path: &Path) -> Result<()> {
    let (n, m) = mel.frames.dim();
    let mut bytes = Vec::with_capacity(28 + n * m * 4);
    bytes.extend_from_slice(MEL_MAGIC);
    for v in [DTYPE_F32, n as u32, m as u32, mel.hop_size, mel.sample_rate] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for v in mel.frames.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(path, &bytes)
}

pub fn load_mel(path: &Path) -> Result<MelFile> {
    let bytes = std::fs::read(path).with_path("read", path)?;
    let mut cur = Cursor::new(&bytes, path);
    if cur.take(8)? != MEL_MAGIC {
        return Err(Error::corrupt(path, "bad magic"));
    }
    let dtype = cur.u32()?;
    let n = cur.u32()? as usize;
    let m = cur.u32()? as usize;
    let hop_size = cur.u32()?;
    let sample_rate = cur.u32()?;
    if dtype != DTYPE_F32 {
        return Err(Error::corrupt(path, format!("unsupported dtype code {dtype}")));
    }
    let values = cur.f32_vec(n * m)?;
    if cur.remaining() != 0 {
        return Err(Error::corrupt(path, "trailing bytes"));
    }
    let frames = Array2::from_shape_vec((n, m), values).map_err(|e| Error::corrupt(path, e.to_string()))?;
    Ok(MelFile {
        frames,
        hop_size,
        sample_rate,
    })
}
