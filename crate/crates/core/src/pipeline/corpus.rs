use std::path::Path;

use super::config::{ExperimentConfig, CONFIG_ECHO};
use super::manifest::{write_manifest, UtteranceRecord};
use super::toy::{toy_noise, toy_utterance, NoiseKind, ToyUtterance};
use crate::error::{IoContext, Result};
use crate::signal::{write_wav, WavFormat, PIPELINE_RATE};

/// Size of a synthetic corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyCorpusSpec {
    /// Clean multi-speaker utterances for the vocoder.
    pub vocoder_utterances: usize,
    pub vocoder_speakers: usize,
    /// Single-speaker utterances for the acoustic model.
    pub acoustic_utterances: usize,
    /// Acoustic utterances at the end of the list tagged `test`.
    pub test_utterances: usize,
    pub seed: u64,
}

impl Default for ToyCorpusSpec {
    fn default() -> Self {
        Self {
            vocoder_utterances: 8,
            vocoder_speakers: 4,
            acoustic_utterances: 20,
            test_utterances: 4,
            seed: 2024,
        }
    }
}

fn record(u: &ToyUtterance, audio: &str, split: &str) -> UtteranceRecord {
    UtteranceRecord {
        id: u.id.clone(),
        audio: audio.into(),
        transcript: u.symbols.join(" "),
        phonemes: u.phonemes.ids.clone(),
        durations: u.phonemes.durations.clone(),
        pitch: None,
        energy: None,
        speaker: u.speaker.clone(),
        split: split.into(),
    }
}

/// Writes audio, manifests, a noise directory and an `experiment.toml` using
/// the toy preset into `root`, and returns the loaded config.
pub fn write_toy_corpus(root: &Path, spec: &ToyCorpusSpec) -> Result<ExperimentConfig> {
    let audio_dir = root.join("audio");
    std::fs::create_dir_all(&audio_dir).with_path("create directory", &audio_dir)?;
    let mut vocoder = Vec::new();
    for i in 0..spec.vocoder_utterances {
        let u = toy_utterance(&format!("voc{i:03}"), i % spec.vocoder_speakers.max(1), spec.seed + i as u64)?;
        let rel = format!("audio/{}.wav", u.id);
        write_wav(&root.join(&rel), &u.audio, WavFormat::Float32)?;
        vocoder.push(record(&u, &rel, "train"));
    }
    let mut acoustic = Vec::new();
    let first_test = spec.acoustic_utterances.saturating_sub(spec.test_utterances);
    for i in 0..spec.acoustic_utterances {
        let u = toy_utterance(&format!("ac{i:03}"), 0, spec.seed + 10_000 + i as u64)?;
        let rel = format!("audio/{}.wav", u.id);
        write_wav(&root.join(&rel), &u.audio, WavFormat::Float32)?;
        acoustic.push(record(&u, &rel, if i >= first_test { "test" } else { "train" }));
    }
    write_manifest(&root.join("vocoder.jsonl"), &vocoder)?;
    write_manifest(&root.join("acoustic.jsonl"), &acoustic)?;
    for (k, kind) in [NoiseKind::White, NoiseKind::Pink, NoiseKind::Rumble].into_iter().enumerate() {
        let name = format!("noise/{kind:?}.wav").to_lowercase();
        let noise = toy_noise(kind, 3 * PIPELINE_RATE as usize, spec.seed + 20_000 + k as u64)?;
        write_wav(&root.join(name), &noise, WavFormat::Float32)?;
    }
    let mut cfg = ExperimentConfig::toy(Path::new(""));
    cfg.seed = spec.seed;
    let path = root.join(CONFIG_ECHO);
    std::fs::write(&path, cfg.to_toml()?).with_path("write", &path)?;
    ExperimentConfig::load(&path)
}
