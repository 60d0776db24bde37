use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{mean_power, Waveform};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct MixOutput {
    /// clean + scaled noise
    pub mixed: Waveform,
    /// The noise actually added, already fitted to the clean length and scaled.
    pub scaled_noise: Waveform,
    pub noise_scale: f64,
    /// Circular read offset into the noise clip.
    pub noise_offset: usize,
}

/// Adds `noise` to `clean` so that `10 log10(P_clean / P_noise) == target_snr_db`,
/// with P the mean squared amplitude over the clean length.
///
/// The noise is read circularly from a seeded random offset, which tiles short
/// clips and truncates long ones.
pub fn mix_at_snr(clean: &Waveform, noise: &Waveform, target_snr_db: f64, seed: u64) -> Result<MixOutput> {
    if clean.sample_rate() != noise.sample_rate() {
        return Err(Error::RateMismatch {
            expected: clean.sample_rate(),
            actual: noise.sample_rate(),
        });
    }
    if !target_snr_db.is_finite() {
        return Err(Error::NonFinite("target SNR".into()));
    }
    let clean_power = clean.power();
    if clean.is_empty() || clean_power == 0.0 {
        return Err(Error::InvalidAudio("clean signal has zero power".into()));
    }
    if noise.is_empty() || noise.power() == 0.0 {
        return Err(Error::InvalidAudio("noise signal has zero power".into()));
    }

    let n = noise.len();
    let offset = ChaCha8Rng::seed_from_u64(seed).random_range(0..n);
    let fitted: Vec<f32> = (0..clean.len()).map(|i| noise.samples()[(offset + i) % n]).collect();
    let fitted_power = mean_power(&fitted);
    if fitted_power == 0.0 {
        return Err(Error::InvalidAudio("noise segment has zero power".into()));
    }

    let scale = (clean_power / (fitted_power * 10f64.powf(target_snr_db / 10.0))).sqrt();
    let scaled: Vec<f32> = fitted.iter().map(|&v| (v as f64 * scale) as f32).collect();
    let mixed: Vec<f32> = clean
        .samples()
        .iter()
        .zip(&scaled)
        .map(|(&c, &v)| c + v)
        .collect();
    Ok(MixOutput {
        mixed: Waveform::new(mixed, clean.sample_rate())?,
        scaled_noise: Waveform::new(scaled, clean.sample_rate())?,
        noise_scale: scale,
        noise_offset: offset,
    })
}
