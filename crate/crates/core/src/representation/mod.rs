//! Frame-level self-supervised speech representations behind a pluggable
//! backend, with single-layer selection and all-layer averaging.

mod cache;
mod external;
mod file;
mod mock;

pub use cache::{RepresentationCache, CACHE_ENV_VAR};
pub use external::ExternalBackend;
pub use file::{load_representation, persist_representation, REP_HEADER_LEN, REP_MAGIC};
pub use mock::{mock_backend, MockBackend};

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{resample, Waveform};

/// Default representation width.
pub const REP_DIM: usize = 768;
/// Representation frame shift.
pub const FRAME_SHIFT_MS: u32 = 20;

/// Which backend layer(s) feed the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LayerSpec {
    /// Layer 0 is the convolutional front end's output.
    Single(usize),
    AverageAll,
}

impl LayerSpec {
    pub fn validate(&self, n_layers: usize) -> Result<()> {
        match *self {
            LayerSpec::Single(k) if k >= n_layers => Err(Error::Config(format!(
                "layer {k} out of range for a backend with layers 0..={}",
                n_layers.saturating_sub(1)
            ))),
            _ => Ok(()),
        }
    }

    /// Short identifier used in file names and compatibility stamps.
    pub fn tag(&self) -> String {
        match self {
            LayerSpec::Single(k) => format!("layer{k}"),
            LayerSpec::AverageAll => "avg".into(),
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Single(k) => write!(f, "layer:{k}"),
            LayerSpec::AverageAll => f.write_str("average"),
        }
    }
}

impl FromStr for LayerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "average" | "avg" | "average_all" => return Ok(LayerSpec::AverageAll),
            _ => {}
        }
        let digits = s
            .strip_prefix("layer:")
            .or_else(|| s.strip_prefix("layer"))
            .unwrap_or(s);
        digits
            .parse()
            .map(LayerSpec::Single)
            .map_err(|_| Error::Config(format!("invalid layer spec {s:?} (want layer:N or average)")))
    }
}

impl TryFrom<String> for LayerSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LayerSpec> for String {
    fn from(l: LayerSpec) -> String {
        l.to_string()
    }
}

/// `n_frames x dim` representation frames on a fixed frame-shift grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationSequence {
    pub frames: Array2<f32>,
    pub frame_shift_ms: f32,
    /// Sample rate of the waveform the frames describe.
    pub source_rate: u32,
}

impl RepresentationSequence {
    pub fn new(frames: Array2<f32>, frame_shift_ms: f32, source_rate: u32) -> Result<Self> {
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("representation frames".into()));
        }
        Ok(Self {
            frames,
            frame_shift_ms,
            source_rate,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }

    /// Frames `[start, start + len)`.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        Self {
            frames: self.frames.slice(ndarray::s![start..start + len, ..]).to_owned(),
            ..*self
        }
    }
}

/// Number of frames on the representation grid for `len` samples at `rate`:
/// `ceil(duration / frame_shift)`.
pub fn grid_frames(len: usize, rate: u32, frame_shift_ms: u32) -> usize {
    let denom = rate as u64 * frame_shift_ms as u64;
    ((len as u64 * 1000).div_ceil(denom)) as usize
}

/// A frozen speech model exposing its per-layer outputs.
///
/// Implementations return layer 0 through layer `n_layers() - 1`, all with the
/// same frame count and width, deterministically for a fixed input.
pub trait RepresentationBackend: Send + Sync {
    /// Stable identity, part of the representation cache key.
    fn id(&self) -> String;
    /// Sample rate the backend expects its input at.
    fn sample_rate(&self) -> u32;
    fn frame_shift_ms(&self) -> u32 {
        FRAME_SHIFT_MS
    }
    fn n_layers(&self) -> usize;
    fn dim(&self) -> usize;
    fn layers(&self, wav: &Waveform) -> Result<Vec<Array2<f32>>>;
}

/// Runs `backend` on `wav` and returns the frames selected by `spec`, on the
/// 20 ms grid of the original waveform's duration.
pub fn extract(
    wav: &Waveform,
    spec: LayerSpec,
    backend: &dyn RepresentationBackend,
) -> Result<RepresentationSequence> {
    spec.validate(backend.n_layers())?;
    if wav.is_empty() {
        return Err(Error::InvalidAudio("cannot extract representations from empty audio".into()));
    }
    let input = resample(wav, backend.sample_rate())?;
    let layers = backend
        .layers(&input)
        .map_err(|e| Error::External(format!("backend {} failed: {e}", backend.id())))?;
    if layers.len() != backend.n_layers() {
        return Err(Error::Shape(format!(
            "backend {} returned {} layers, declared {}",
            backend.id(),
            layers.len(),
            backend.n_layers()
        )));
    }
    let shape = layers[0].dim();
    if shape.1 != backend.dim() || layers.iter().any(|l| l.dim() != shape) {
        return Err(Error::Shape(format!(
            "backend {} returned inconsistent layer shapes",
            backend.id()
        )));
    }
    if shape.0 == 0 {
        return Err(Error::Shape(format!("backend {} returned no frames", backend.id())));
    }

    let selected = match spec {
        LayerSpec::Single(k) => layers[k].clone(),
        LayerSpec::AverageAll => {
            let mut acc = Array2::<f64>::zeros(shape);
            for l in &layers {
                acc.zip_mut_with(l, |a, &v| *a += v as f64);
            }
            let n = layers.len() as f64;
            acc.mapv(|v| (v / n) as f32)
        }
    };

    let target = grid_frames(wav.len(), wav.sample_rate(), FRAME_SHIFT_MS);
    let frames = regrid(&selected, backend.frame_shift_ms(), target);
    RepresentationSequence::new(frames, FRAME_SHIFT_MS as f32, wav.sample_rate())
}

/// Nearest-in-time mapping of backend frames onto `target` frames of
/// `FRAME_SHIFT_MS`.
fn regrid(frames: &Array2<f32>, backend_shift_ms: u32, target: usize) -> Array2<f32> {
    let n = frames.nrows();
    let mut out = Array2::zeros((target, frames.ncols()));
    for t in 0..target {
        let src = ((t as u64 * FRAME_SHIFT_MS as u64 * 2 + backend_shift_ms as u64) / (2 * backend_shift_ms as u64))
            as usize;
        out.row_mut(t).assign(&frames.row(src.min(n - 1)));
    }
    out
}
