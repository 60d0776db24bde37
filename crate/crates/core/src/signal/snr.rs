use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::error::{Error, Result};

/// Result of a reference-free SNR estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SnrEstimate {
    Db(f64),
    /// Frames could not be split into a speech and a noise class.
    Unmeasurable,
}

impl SnrEstimate {
    pub fn db(self) -> Option<f64> {
        match self {
            SnrEstimate::Db(v) => Some(v),
            SnrEstimate::Unmeasurable => None,
        }
    }
}

/// Energy-VAD settings for [`estimate_snr`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VadConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    /// Frames at or below this energy percentile count as noise.
    pub noise_percentile: f64,
    /// Frames at or above this energy percentile count as speech.
    pub speech_percentile: f64,
    pub min_duration_secs: f64,
}

impl Default for VadConfig {
    fn default() -> Self {
        Self {
            frame_ms: 25.0,
            hop_ms: 10.0,
            noise_percentile: 20.0,
            speech_percentile: 60.0,
            min_duration_secs: 0.5,
        }
    }
}

/// Reference-free SNR: ratio of mean frame power over "speech" frames to mean
/// frame power over "noise" frames, classes split by frame-energy percentiles.
pub fn estimate_snr(wav: &Waveform) -> Result<SnrEstimate> {
    estimate_snr_with(wav, &VadConfig::default())
}

pub fn estimate_snr_with(wav: &Waveform, vad: &VadConfig) -> Result<SnrEstimate> {
    if wav.duration_secs() < vad.min_duration_secs {
        return Err(Error::InvalidAudio(format!(
            "SNR estimation needs at least {} s of audio, got {:.3} s",
            vad.min_duration_secs,
            wav.duration_secs()
        )));
    }
    let rate = wav.sample_rate() as f64;
    let frame = (vad.frame_ms * rate / 1000.0).round() as usize;
    let hop = (vad.hop_ms * rate / 1000.0).round() as usize;
    let x = wav.samples();
    let powers: Vec<f64> = (0..)
        .map(|t| t * hop)
        .take_while(|&start| start + frame <= x.len())
        .map(|start| super::mean_power(&x[start..start + frame]))
        .collect();
    if powers.len() < 2 {
        return Ok(SnrEstimate::Unmeasurable);
    }

    let mut sorted = powers.clone();
    sorted.sort_by(f64::total_cmp);
    let noise_thr = percentile(&sorted, vad.noise_percentile);
    let speech_thr = percentile(&sorted, vad.speech_percentile);
    if noise_thr >= speech_thr {
        return Ok(SnrEstimate::Unmeasurable);
    }
    let class_mean = |keep: &dyn Fn(f64) -> bool| {
        let (sum, n) = powers
            .iter()
            .filter(|&&p| keep(p))
            .fold((0.0, 0usize), |(s, n), &p| (s + p, n + 1));
        (n > 0).then(|| sum / n as f64)
    };
    let noise = class_mean(&|p| p <= noise_thr);
    let speech = class_mean(&|p| p >= speech_thr);
    match (speech, noise) {
        (Some(s), Some(n)) if n > 0.0 && s > 0.0 => Ok(SnrEstimate::Db(10.0 * (s / n).log10())),
        _ => Ok(SnrEstimate::Unmeasurable),
    }
}

/// Linear-interpolated percentile of ascending `sorted`.
fn percentile(sorted: &[f64], pct: f64) -> f64 {
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `10 log10(||reference||^2 / ||test - reference||^2)`; `+inf` when the two
/// signals are identical.
pub fn residual_snr(test: &Waveform, reference: &Waveform) -> Result<f64> {
    if test.sample_rate() != reference.sample_rate() {
        return Err(Error::RateMismatch {
            expected: reference.sample_rate(),
            actual: test.sample_rate(),
        });
    }
    if test.len() != reference.len() {
        return Err(Error::Shape(format!(
            "residual SNR needs equal lengths, got {} and {}",
            test.len(),
            reference.len()
        )));
    }
    let signal: f64 = reference.samples().iter().map(|&r| (r as f64).powi(2)).sum();
    if signal == 0.0 {
        return Err(Error::InvalidAudio("reference has zero power".into()));
    }
    let residual: f64 = test
        .samples()
        .iter()
        .zip(reference.samples())
        .map(|(&t, &r)| (t as f64 - r as f64).powi(2))
        .sum();
    if residual == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / residual).log10())
}
