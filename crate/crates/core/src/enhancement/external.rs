use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::Enhancer;
use crate::error::{Error, Result};
use crate::signal::{read_wav, resample, write_wav, WavFormat, Waveform};
use crate::tool::{resolve_tool, run_tool};
use crate::vocoder::SAMPLES_PER_FRAME;

/// Subprocess enhancer: `<tool> <in.wav> <out.wav>` at the tool's own rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalEnhancerConfig {
    pub tool: PathBuf,
    #[serde(default = "default_rate")]
    pub sample_rate: u32,
}

fn default_rate() -> u32 {
    16_000
}

#[derive(Debug)]
pub struct ExternalEnhancer {
    tool: PathBuf,
    sample_rate: u32,
    lock: Mutex<()>,
}

/// Fails with a configuration error when the tool cannot be found.
pub fn external_enhancer(config: &ExternalEnhancerConfig) -> Result<ExternalEnhancer> {
    if config.sample_rate == 0 {
        return Err(Error::Config("external enhancer sample rate must be positive".into()));
    }
    Ok(ExternalEnhancer {
        tool: resolve_tool(&config.tool)?,
        sample_rate: config.sample_rate,
        lock: Mutex::new(()),
    })
}

impl Enhancer for ExternalEnhancer {
    fn id(&self) -> String {
        format!("external:{}@{}", self.tool.display(), self.sample_rate)
    }

    /// Resamples to the tool's rate and back; the result may differ from the
    /// input length by at most one 20 ms frame before it is trimmed or padded.
    fn enhance(&self, wav: &Waveform) -> Result<Waveform> {
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        let dir = tempfile::tempdir().map_err(|e| Error::io("create temp dir", e))?;
        let input = dir.path().join("in.wav");
        let output = dir.path().join("out.wav");
        write_wav(&input, &resample(wav, self.sample_rate)?, WavFormat::Float32)?;
        run_tool(&self.tool, &[input.as_os_str(), output.as_os_str()])?;
        if !output.exists() {
            return Err(Error::External(format!("{} wrote no output audio", self.tool.display())));
        }
        let out = read_wav(&output).map_err(|e| Error::External(format!("malformed enhancer output: {e}")))?;
        let back = resample(&out, wav.sample_rate())?;
        let tolerance = SAMPLES_PER_FRAME * wav.sample_rate() as usize / crate::signal::PIPELINE_RATE as usize;
        if back.len().abs_diff(wav.len()) > tolerance {
            return Err(Error::External(format!(
                "enhancer returned {} samples for a {}-sample input",
                back.len(),
                wav.len()
            )));
        }
        Ok(back.fit_to_len(wav.len()))
    }
}
