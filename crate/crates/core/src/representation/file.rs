//! `R2WREP1` tensor file.
//!
//! ```text
//! offset  size  field
//! 0       8     magic "R2WREP1\0"
//! 8       4     dtype code (u32, 1 = float32)
//! 12      4     n_frames (u32)
//! 16      4     dim (u32)
//! 20      4     frame_shift_ms (f32)
//! 24      4     source_rate (u32)
//! 28      ...   n_frames * dim float32 values, row-major
//! ```
//! All fields little-endian.

use std::path::Path;

use ndarray::Array2;

use super::RepresentationSequence;
use crate::binfmt::{atomic_write, Cursor};
use crate::error::{Error, IoContext, Result};

pub const REP_MAGIC: &[u8; 8] = b"R2WREP1\0";
pub const REP_HEADER_LEN: usize = 28;
const DTYPE_F32: u32 = 1;

pub fn persist_representation(seq: &RepresentationSequence, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(REP_HEADER_LEN + seq.frames.len() * 4);
    bytes.extend_from_slice(REP_MAGIC);
    bytes.extend_from_slice(&DTYPE_F32.to_le_bytes());
    bytes.extend_from_slice(&(seq.n_frames() as u32).to_le_bytes());
    bytes.extend_from_slice(&(seq.dim() as u32).to_le_bytes());
    bytes.extend_from_slice(&seq.frame_shift_ms.to_le_bytes());
    bytes.extend_from_slice(&seq.source_rate.to_le_bytes());
    for v in seq.frames.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    atomic_write(path, &bytes)
}

/// Loads a representation file, optionally checking its width.
pub fn load_representation(path: &Path, expected_dim: Option<usize>) -> Result<RepresentationSequence> {
    let bytes = std::fs::read(path).with_path("read", path)?;
    let mut cur = Cursor::new(&bytes, path);
    let header = |e: Error| match e {
        Error::Corrupt { .. } => Error::corrupt(path, "truncated header"),
        other => other,
    };
    if cur.take(8).map_err(header)? != REP_MAGIC {
        return Err(Error::corrupt(path, "bad magic"));
    }
    let dtype = cur.u32().map_err(header)?;
    let n_frames = cur.u32().map_err(header)? as usize;
    let dim = cur.u32().map_err(header)? as usize;
    let frame_shift_ms = cur.f32().map_err(header)?;
    let source_rate = cur.u32().map_err(header)?;
    if dtype != DTYPE_F32 {
        return Err(Error::corrupt(path, format!("unsupported dtype code {dtype}")));
    }
    if let Some(d) = expected_dim {
        if d != dim {
            return Err(Error::Shape(format!(
                "{}: representation dim {dim}, expected {d}",
                path.display()
            )));
        }
    }
    let values = cur.f32_vec(n_frames * dim)?;
    if cur.remaining() != 0 {
        return Err(Error::corrupt(path, "trailing bytes after data"));
    }
    let frames = Array2::from_shape_vec((n_frames, dim), values)
        .map_err(|e| Error::corrupt(path, e.to_string()))?;
    RepresentationSequence::new(frames, frame_shift_ms, source_rate)
}
