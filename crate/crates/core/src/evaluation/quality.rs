use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{write_wav, WavFormat, Waveform};
use crate::tool::{resolve_tool, run_tool};

/// Valid MOS-LQO interval.
pub const MOS_LQO_RANGE: (f64, f64) = (1.0, 4.75);

/// Contract: `<tool> [args...] <reference.wav> <test.wav>` prints the score as
/// the last number on stdout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityAdapterConfig {
    pub tool: PathBuf,
    #[serde(default)]
    pub args: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct QualityAdapter {
    tool: PathBuf,
    args: Vec<String>,
}

impl QualityAdapter {
    pub fn new(config: &QualityAdapterConfig) -> Result<Self> {
        Ok(Self {
            tool: resolve_tool(&config.tool)?,
            args: config.args.clone(),
        })
    }

    pub fn score(&self, reference: &Waveform, test: &Waveform) -> Result<f64> {
        let dir = tempfile::tempdir().map_err(|e| Error::io("create temp dir", e))?;
        let r = dir.path().join("reference.wav");
        let t = dir.path().join("test.wav");
        write_wav(&r, reference, WavFormat::Pcm16)?;
        write_wav(&t, test, WavFormat::Pcm16)?;
        let mut args: Vec<&std::ffi::OsStr> = self.args.iter().map(|a| a.as_ref()).collect();
        args.push(r.as_os_str());
        args.push(t.as_os_str());
        let out = run_tool(&self.tool, &args)?;
        parse_score(&String::from_utf8_lossy(&out.stdout))
    }
}

fn parse_score(stdout: &str) -> Result<f64> {
    let v = stdout
        .split(|c: char| c.is_whitespace() || c == ',' || c == '=' || c == ':')
        .filter_map(|tok| tok.parse::<f64>().ok())
        .next_back()
        .ok_or_else(|| Error::External(format!("no score in quality tool output {:?}", stdout.trim())))?;
    let (lo, hi) = MOS_LQO_RANGE;
    if !(lo..=hi).contains(&v) {
        return Err(Error::External(format!("quality score {v} outside [{lo}, {hi}]")));
    }
    Ok(v)
}
