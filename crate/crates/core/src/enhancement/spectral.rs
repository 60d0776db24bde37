use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::Enhancer;
use crate::error::{Error, Result};
use crate::signal::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralSubtractionConfig {
    pub fft_size: usize,
    pub hop_size: usize,
    /// Per-bin magnitude percentile taken as the stationary noise floor.
    pub noise_floor_percentile: f64,
    pub oversubtraction: f64,
    /// Lower bound on the output magnitude as a fraction of the input magnitude.
    pub magnitude_floor: f64,
}

impl Default for SpectralSubtractionConfig {
    fn default() -> Self {
        Self {
            fft_size: 512,
            hop_size: 128,
            noise_floor_percentile: 20.0,
            oversubtraction: 1.5,
            magnitude_floor: 0.01,
        }
    }
}

/// Magnitude-domain spectral subtraction with a percentile noise estimate,
/// phase kept, resynthesized by weighted overlap-add.
#[derive(Debug, Clone)]
pub struct SpectralSubtraction {
    config: SpectralSubtractionConfig,
    window: Vec<f64>,
}

pub fn spectral_subtraction_enhancer(noise_floor_percentile: f64, oversubtraction: f64) -> Result<SpectralSubtraction> {
    SpectralSubtraction::new(SpectralSubtractionConfig {
        noise_floor_percentile,
        oversubtraction,
        ..SpectralSubtractionConfig::default()
    })
}

impl SpectralSubtraction {
    pub fn new(config: SpectralSubtractionConfig) -> Result<Self> {
        let c = &config;
        if c.fft_size < 4 || c.hop_size == 0 || c.hop_size > c.fft_size / 2 {
            return Err(Error::Config(format!(
                "spectral subtraction needs fft_size >= 4 and 0 < hop <= fft_size / 2, got {} / {}",
                c.fft_size, c.hop_size
            )));
        }
        if !(0.0..=100.0).contains(&c.noise_floor_percentile) || c.oversubtraction < 0.0 || c.magnitude_floor < 0.0 {
            return Err(Error::Config("spectral subtraction percentile or factors out of range".into()));
        }
        // sqrt-Hann for both analysis and synthesis
        let n = c.fft_size;
        let window = (0..n)
            .map(|i| (0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).sqrt())
            .collect();
        Ok(Self { config, window })
    }

    pub fn config(&self) -> &SpectralSubtractionConfig {
        &self.config
    }
}

fn percentile(v: &mut [f64], p: f64) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = p / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

impl Enhancer for SpectralSubtraction {
    fn id(&self) -> String {
        let c = &self.config;
        format!(
            "spectral-subtraction-n{}-h{}-p{}-a{}-f{}",
            c.fft_size, c.hop_size, c.noise_floor_percentile, c.oversubtraction, c.magnitude_floor
        )
    }

    fn enhance(&self, wav: &Waveform) -> Result<Waveform> {
        let (n, hop) = (self.config.fft_size, self.config.hop_size);
        if wav.len() < n {
            return Err(Error::InvalidAudio(format!(
                "spectral subtraction needs at least {n} samples, got {}",
                wav.len()
            )));
        }
        // zero margins so every sample is covered by full overlap
        let len = wav.len();
        let total = len + 2 * n;
        let n_frames = (total - n) / hop + 1;
        let mut x = vec![0f64; n_frames * hop + n];
        for (dst, &s) in x[n..].iter_mut().zip(wav.samples()) {
            *dst = s as f64;
        }

        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let bins = n / 2 + 1;
        let mut spec = vec![vec![Complex::new(0.0, 0.0); n]; n_frames];
        for (t, frame) in spec.iter_mut().enumerate() {
            for (i, c) in frame.iter_mut().enumerate() {
                *c = Complex::new(x[t * hop + i] * self.window[i], 0.0);
            }
            fwd.process(frame);
        }

        let floor: Vec<f64> = (0..bins)
            .map(|k| {
                let mut mags: Vec<f64> = spec.iter().map(|f| f[k].norm()).collect();
                percentile(&mut mags, self.config.noise_floor_percentile)
            })
            .collect();

        let mut out = vec![0f64; x.len()];
        let mut norm = vec![0f64; x.len()];
        for (t, frame) in spec.iter_mut().enumerate() {
            for k in 0..bins {
                let mag = frame[k].norm();
                if mag > 0.0 {
                    let cleaned = (mag - self.config.oversubtraction * floor[k]).max(self.config.magnitude_floor * mag);
                    frame[k] *= cleaned / mag;
                }
                if k > 0 && k < n - k {
                    frame[n - k] = frame[k].conj();
                }
            }
            inv.process(frame);
            for i in 0..n {
                out[t * hop + i] += frame[i].re / n as f64 * self.window[i];
                norm[t * hop + i] += self.window[i] * self.window[i];
            }
        }
        let samples = (n..n + len)
            .map(|i| if norm[i] > 1e-8 { (out[i] / norm[i]) as f32 } else { 0.0 })
            .collect();
        Waveform::new(samples, wav.sample_rate())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::toy_utterance;
    use crate::signal::{estimate_snr, mix_at_snr, residual_snr};

    fn default() -> SpectralSubtraction {
        SpectralSubtraction::new(SpectralSubtractionConfig::default()).unwrap()
    }

    #[test]
    fn no_subtraction_reconstructs_input() {
        let e = spectral_subtraction_enhancer(20.0, 0.0).unwrap();
        let w = Waveform::new((0..3000).map(|i| ((i as f32) * 0.05).sin() * 0.3).collect(), 24_000).unwrap();
        let out = e.enhance(&w).unwrap();
        assert!(residual_snr(&out, &w).unwrap() > 100.0);
    }

    #[test]
    fn silence_stays_silent() {
        let out = default().enhance(&Waveform::silence(24_000, 24_000)).unwrap();
        assert!(out.peak() < 1e-4);
    }

    #[test]
    fn too_short_input_is_rejected() {
        assert!(default().enhance(&Waveform::silence(100, 24_000)).is_err());
    }

    #[test]
    fn improves_snr_of_a_noisy_tone() {
        let n = 48_000;
        // tone bursts with gaps, so the estimator sees both classes
        let clean: Vec<f32> = (0..n)
            .map(|i| {
                let on = (i / 6000) % 2 == 0;
                if on { 0.4 * (2.0 * std::f32::consts::PI * 440.0 * i as f32 / 24_000.0).sin() } else { 0.0 }
            })
            .collect();
        let clean = Waveform::new(clean, 24_000).unwrap();
        let noise = crate::pipeline::toy_noise(crate::pipeline::NoiseKind::White, n, 5).unwrap();
        let noisy = mix_at_snr(&clean, &noise, 5.0, 1).unwrap().mixed;
        let out = default().enhance(&noisy).unwrap();
        let before = estimate_snr(&noisy).unwrap().db().unwrap();
        let after = estimate_snr(&out).unwrap().db().unwrap();
        assert!(after > before, "{before} -> {after}");
    }

    #[test]
    fn clean_speech_is_barely_distorted() {
        let u = toy_utterance("u", 1, 21).unwrap();
        let out = default().enhance(&u.audio).unwrap();
        let r = residual_snr(&out, &u.audio).unwrap();
        assert!(r > 15.0, "{r}");
    }
}
