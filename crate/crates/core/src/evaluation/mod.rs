//! Desk-scale measurement protocol: SNR and speaker-similarity reports,
//! spectrogram figures, and an adapter for an external quality meter.

mod figure;
mod font;
mod quality;
mod report;

use crate::error::{Error, Result};
use crate::signal::{mel_spectrogram, resample, SpectralConfig, Waveform};

pub use figure::{render_spectrogram_figure, spectrogram_figure, PANEL_GAP, LABEL_HEIGHT};
pub use quality::{QualityAdapter, QualityAdapterConfig, MOS_LQO_RANGE};
pub use report::{evaluate_corpus, Condition, EvalItem, EvalReport, Metric, ReportRow, MOS_UNAVAILABLE};

/// Maps a waveform to a unit-norm vector.
pub trait SpeakerEmbedder: Send + Sync {
    fn embed(&self, wav: &Waveform) -> Result<Vec<f64>>;
}

/// Time-averaged log-mel vector, mean-removed and unit-normalized.
#[derive(Debug, Clone, Copy)]
pub struct MelSpeakerEmbedder {
    pub config: SpectralConfig,
}

impl Default for MelSpeakerEmbedder {
    fn default() -> Self {
        Self {
            config: SpectralConfig::REP_ALIGNED,
        }
    }
}

impl SpeakerEmbedder for MelSpeakerEmbedder {
    fn embed(&self, wav: &Waveform) -> Result<Vec<f64>> {
        let wav = resample(wav, self.config.sample_rate)?;
        let mel = mel_spectrogram(&wav, &self.config)?;
        let n = mel.n_frames() as f64;
        let mut v: Vec<f64> = mel.frames.columns().into_iter().map(|c| c.sum() / n).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-12 {
            // flat spectrum (e.g. silence): a fixed unit vector keeps the contract
            let mut e = vec![0.0; v.len()];
            e[0] = 1.0;
            return Ok(e);
        }
        Ok(v.into_iter().map(|x| x / norm).collect())
    }
}

/// Cosine similarity of the two embeddings.
pub fn speaker_similarity(a: &Waveform, b: &Waveform, embedder: &dyn SpeakerEmbedder) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidAudio("speaker similarity needs nonempty audio".into()));
    }
    let (ea, eb) = (embedder.embed(a)?, embedder.embed(b)?);
    if ea.len() != eb.len() || ea.is_empty() {
        return Err(Error::Shape(format!("embeddings of size {} and {}", ea.len(), eb.len())));
    }
    let dot: f64 = ea.iter().zip(&eb).map(|(x, y)| x * y).sum();
    let na = ea.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = eb.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(na > 0.0 && nb > 0.0) {
        return Err(Error::NonFinite("zero-norm speaker embedding".into()));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}
