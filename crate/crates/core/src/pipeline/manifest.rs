use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::acoustic::PhonemeSequence;
use crate::error::{Error, IoContext, Result};

/// One manifest line: an utterance, its alignment and who spoke it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub id: String,
    /// Relative paths resolve against the manifest's directory.
    pub audio: PathBuf,
    #[serde(default)]
    pub transcript: String,
    pub phonemes: Vec<u32>,
    /// Frames per phoneme on the 20 ms grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub durations: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pitch: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<Vec<f32>>,
    pub speaker: String,
    #[serde(default = "default_split")]
    pub split: String,
}

fn default_split() -> String {
    "train".into()
}

impl UtteranceRecord {
    pub fn phoneme_sequence(&self) -> PhonemeSequence {
        PhonemeSequence {
            ids: self.phonemes.clone(),
            durations: self.durations.clone(),
            pitch: self.pitch.clone(),
            energy: self.energy.clone(),
        }
    }
}

/// Reads a JSON-lines manifest. Ids must be unique and audio files must exist.
pub fn load_manifest(path: &Path) -> Result<Vec<UtteranceRecord>> {
    let file = std::fs::File::open(path).with_path("open manifest", path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_path("read manifest", path)?;
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: UtteranceRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), n + 1)))?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::Data(format!("{}: duplicate utterance id {}", path.display(), rec.id)));
        }
        if rec.audio.is_relative() {
            rec.audio = base.join(&rec.audio);
        }
        if !rec.audio.is_file() {
            return Err(Error::Data(format!("{}: audio {} not found", rec.id, rec.audio.display())));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, records: &[UtteranceRecord]) -> Result<()> {
    let mut bytes = Vec::new();
    for r in records {
        serde_json::to_writer(&mut bytes, r)?;
        bytes.push(b'\n');
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_path("create directory", dir)?;
    }
    let mut f = std::fs::File::create(path).with_path("create manifest", path)?;
    f.write_all(&bytes).with_path("write manifest", path)
}
