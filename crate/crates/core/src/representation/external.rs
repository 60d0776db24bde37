use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{load_representation, RepresentationBackend, REP_DIM};
use crate::error::{Error, Result};
use crate::signal::{write_wav, WavFormat, Waveform};
use crate::tool::{resolve_tool, run_tool};

/// Adapter for a pretrained model run out of process.
///
/// Contract: `<tool> <checkpoint> <in.wav> <out_dir>` exits 0 after writing
/// `layer_00.rep` .. `layer_NN.rep` (one `R2WREP1` file per layer, all with
/// the same frame count) into `out_dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalBackend {
    pub tool: PathBuf,
    pub checkpoint: PathBuf,
    #[serde(default = "default_layers")]
    pub n_layers: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_rate")]
    pub sample_rate: u32,
}

fn default_layers() -> usize {
    13
}
fn default_dim() -> usize {
    REP_DIM
}
fn default_rate() -> u32 {
    16_000
}

impl ExternalBackend {
    /// Validates that the tool and checkpoint exist before any audio is touched.
    pub fn new(tool: &Path, checkpoint: &Path) -> Result<Self> {
        let backend = Self {
            tool: tool.to_path_buf(),
            checkpoint: checkpoint.to_path_buf(),
            n_layers: default_layers(),
            dim: default_dim(),
            sample_rate: default_rate(),
        };
        backend.check()?;
        Ok(backend)
    }

    pub fn check(&self) -> Result<()> {
        resolve_tool(&self.tool)?;
        if !self.checkpoint.exists() {
            return Err(Error::Config(format!(
                "pretrained checkpoint {} not found",
                self.checkpoint.display()
            )));
        }
        Ok(())
    }
}

impl RepresentationBackend for ExternalBackend {
    fn id(&self) -> String {
        format!("external:{}", self.checkpoint.display())
    }

    fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    fn n_layers(&self) -> usize {
        self.n_layers
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn layers(&self, wav: &Waveform) -> Result<Vec<Array2<f32>>> {
        let tool = resolve_tool(&self.tool)?;
        let dir = tempfile::tempdir().map_err(|e| Error::io("create temp dir", e))?;
        let input = dir.path().join("in.wav");
        let out_dir = dir.path().join("layers");
        std::fs::create_dir_all(&out_dir).map_err(|e| Error::io("create temp dir", e))?;
        write_wav(&input, wav, WavFormat::Float32)?;
        run_tool(
            &tool,
            &[self.checkpoint.as_os_str(), input.as_os_str(), out_dir.as_os_str()],
        )?;
        (0..self.n_layers)
            .map(|k| {
                let p = out_dir.join(format!("layer_{k:02}.rep"));
                if !p.exists() {
                    return Err(Error::External(format!("tool did not write {}", p.display())));
                }
                Ok(load_representation(&p, Some(self.dim))?.frames)
            })
            .collect()
    }
}
