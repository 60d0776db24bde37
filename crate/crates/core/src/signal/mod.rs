//! Waveform-level primitives: audio I/O, resampling, mel analysis, SNR mixing
//! and SNR measurement.

mod mix;
mod resample;
mod snr;
pub mod spectral;
mod wav;

pub use mix::{mix_at_snr, MixOutput};
pub use resample::resample;
pub use snr::{estimate_snr, residual_snr, SnrEstimate, VadConfig};
pub use spectral::{
    mel_filterbank, mel_spectrogram, n_frames, MelFilterbank, MelSpectrogram, PaddingMode,
    SpectralConfig,
};
pub use wav::{load_audio, read_wav, write_wav, WavFormat};

use crate::error::{Error, Result};

/// Pipeline-wide sample rate.
pub const PIPELINE_RATE: u32 = 24_000;

/// Mono audio with its sample rate. Samples are finite, nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidAudio("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidAudio(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate: sample_rate.max(1),
        }
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean squared amplitude over the whole signal.
    pub fn power(&self) -> f64 {
        mean_power(&self.samples)
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }

    pub fn scaled(&self, gain: f32) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Samples `[start, start + len)`, clipped to the signal.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        let start = start.min(self.samples.len());
        let end = (start + len).min(self.samples.len());
        Self {
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    /// Truncates or zero-pads to exactly `len` samples.
    pub fn fit_to_len(mut self, len: usize) -> Self {
        self.samples.resize(len, 0.0);
        self
    }

    /// Content fingerprint over rate and raw sample bits.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.sample_rate.to_le_bytes());
        h.update((self.samples.len() as u64).to_le_bytes());
        for s in &self.samples {
            h.update(s.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

pub(crate) fn mean_power(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>() / samples.len() as f64
}
