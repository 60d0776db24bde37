//! STFT framing, mel filterbank and log-mel analysis.
//!
//! Framing rule (center mode): frame `t` is centered on sample `t * hop`, the
//! signal is reflection-padded as needed, and `n_frames = ceil(len / hop)`.
//! At 24 kHz and hop 480 one frame covers exactly one 20 ms representation
//! frame, so a 1 s clip gives 50 mel frames and 50 representation frames.

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PaddingMode {
    #[default]
    Center,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralConfig {
    pub fft_size: usize,
    pub hop_size: usize,
    pub window_size: usize,
    pub n_mels: usize,
    pub sample_rate: u32,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
    #[serde(default)]
    pub padding: PaddingMode,
}

impl SpectralConfig {
    /// 10 ms mel analysis (fft 1024, hop 240, window 960, 80 bands).
    pub const BASELINE: SpectralConfig = SpectralConfig {
        fft_size: 1024,
        hop_size: 240,
        window_size: 960,
        n_mels: 80,
        sample_rate: 24_000,
        fmin: 0.0,
        fmax: 12_000.0,
        log_floor: 1e-5,
        padding: PaddingMode::Center,
    };

    /// 20 ms mel analysis aligned with the representation grid (hop 480).
    pub const REP_ALIGNED: SpectralConfig = SpectralConfig {
        hop_size: 480,
        ..Self::BASELINE
    };

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("spectral config: {msg}")));
        if self.fft_size == 0 || self.hop_size == 0 || self.window_size == 0 {
            return bad("sizes must be positive");
        }
        if self.window_size > self.fft_size {
            return bad("window_size exceeds fft_size");
        }
        if self.hop_size > self.window_size {
            return bad("hop_size exceeds window_size");
        }
        if self.n_mels == 0 {
            return bad("n_mels must be positive");
        }
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive");
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= self.sample_rate as f64 / 2.0) {
            return bad("need 0 <= fmin < fmax <= nyquist");
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return bad("log_floor must be positive");
        }
        Ok(())
    }

    pub fn n_freq(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frame count for a signal of `len` samples, `None` when the signal is
    /// shorter than one frame without padding.
    pub fn n_frames(&self, len: usize) -> Option<usize> {
        n_frames(len, self.hop_size, self.fft_size, self.padding)
    }

    /// Padded-signal index of every sample read by the framer, in order.
    /// Frame `t` reads entries `[t * hop, t * hop + fft_size)`.
    pub fn padded_indices(&self, len: usize) -> Option<Vec<usize>> {
        let frames = self.n_frames(len)?;
        if frames == 0 {
            return Some(Vec::new());
        }
        let padded_len = (frames - 1) * self.hop_size + self.fft_size;
        Some(match self.padding {
            PaddingMode::Center => {
                let left = (self.fft_size / 2) as i64;
                (0..padded_len as i64).map(|j| reflect_index(j - left, len)).collect()
            }
            PaddingMode::None => (0..padded_len).collect(),
        })
    }

    /// Periodic Hann window of `window_size`, zero-padded and centered in
    /// `fft_size` taps.
    pub fn window(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.fft_size];
        let offset = (self.fft_size - self.window_size) / 2;
        for i in 0..self.window_size {
            let phase = 2.0 * std::f64::consts::PI * i as f64 / self.window_size as f64;
            w[offset + i] = 0.5 - 0.5 * phase.cos();
        }
        w
    }
}

pub fn n_frames(len: usize, hop: usize, fft_size: usize, padding: PaddingMode) -> Option<usize> {
    match padding {
        PaddingMode::Center => Some(len.div_ceil(hop)),
        PaddingMode::None if len >= fft_size => Some(1 + (len - fft_size) / hop),
        PaddingMode::None => None,
    }
}

/// Maps an out-of-range index into `[0, len)` by mirror reflection (edge
/// samples not repeated), folding as many times as needed.
pub(crate) fn reflect_index(i: i64, len: usize) -> usize {
    if len <= 1 {
        return 0;
    }
    let period = 2 * (len as i64 - 1);
    let m = i.rem_euclid(period);
    if m < len as i64 {
        m as usize
    } else {
        (period - m) as usize
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    if hz < 1000.0 {
        hz / F_SP
    } else {
        15.0 + (hz / 1000.0).ln() / (6.4f64.ln() / 27.0)
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    if mel < 15.0 {
        mel * F_SP
    } else {
        1000.0 * ((mel - 15.0) * (6.4f64.ln() / 27.0)).exp()
    }
}

/// Area-normalized triangular mel filters on the Slaney mel scale.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `n_mels x n_freq`
    pub weights: Array2<f64>,
    pub centers_hz: Vec<f64>,
}

pub fn mel_filterbank(config: &SpectralConfig) -> MelFilterbank {
    let n_freq = config.n_freq();
    let nyquist = config.sample_rate as f64 / 2.0;
    let fft_freqs: Vec<f64> = (0..n_freq)
        .map(|k| k as f64 * nyquist / (n_freq - 1) as f64)
        .collect();
    let (lo, hi) = (hz_to_mel(config.fmin), hz_to_mel(config.fmax));
    let edges: Vec<f64> = (0..config.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (config.n_mels + 1) as f64))
        .collect();
    let mut weights = Array2::zeros((config.n_mels, n_freq));
    for m in 0..config.n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let enorm = 2.0 / (right - left);
        for (k, &f) in fft_freqs.iter().enumerate() {
            let rising = (f - left) / (center - left);
            let falling = (right - f) / (right - center);
            weights[[m, k]] = rising.min(falling).max(0.0) * enorm;
        }
    }
    MelFilterbank {
        weights,
        centers_hz: edges[1..=config.n_mels].to_vec(),
    }
}

/// Log-mel frames (`n_frames x n_mels`, natural log of floor-clamped mel
/// magnitudes) with the analysis configuration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub frames: Array2<f64>,
    pub config: SpectralConfig,
}

impl MelSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn n_mels(&self) -> usize {
        self.frames.ncols()
    }
}

/// STFT magnitudes, `n_frames x n_freq`.
pub fn stft_magnitude(samples: &[f32], config: &SpectralConfig) -> Result<Array2<f64>> {
    let indices = config.padded_indices(samples.len()).ok_or_else(|| {
        Error::InvalidAudio(format!(
            "{} samples is shorter than one {}-sample frame and padding is disabled",
            samples.len(),
            config.fft_size
        ))
    })?;
    let frames = config.n_frames(samples.len()).unwrap_or(0);
    let n_fft = config.fft_size;
    let window = config.window();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let mut out = Array2::zeros((frames, config.n_freq()));
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for t in 0..frames {
        let start = t * config.hop_size;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = Complex::new(samples[indices[start + i]] as f64 * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (k, c) in buf[..config.n_freq()].iter().enumerate() {
            out[[t, k]] = c.norm();
        }
    }
    Ok(out)
}

pub fn mel_spectrogram(wav: &Waveform, config: &SpectralConfig) -> Result<MelSpectrogram> {
    config.validate()?;
    if wav.sample_rate() != config.sample_rate {
        return Err(Error::RateMismatch {
            expected: config.sample_rate,
            actual: wav.sample_rate(),
        });
    }
    if wav.is_empty() {
        return Err(Error::InvalidAudio("empty waveform".into()));
    }
    let mags = stft_magnitude(wav.samples(), config)?;
    let bank = mel_filterbank(config);
    let mel = mags.dot(&bank.weights.t());
    let floor = config.log_floor;
    Ok(MelSpectrogram {
        frames: mel.mapv(|v| v.max(floor).ln()),
        config: *config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, len: usize, amp: f64) -> Waveform {
        let s = (0..len)
            .map(|i| (amp * (2.0 * std::f64::consts::PI * freq * i as f64 / 24_000.0).sin()) as f32)
            .collect();
        Waveform::new(s, 24_000).unwrap()
    }

    /// Counts frames by walking frame centers (center mode) or frame starts.
    fn brute_force_frames(len: usize, hop: usize, fft: usize, padding: PaddingMode) -> Option<usize> {
        match padding {
            PaddingMode::Center => {
                let mut count = 0;
                let mut c = 0;
                while c < len {
                    count += 1;
                    c += hop;
                }
                Some(count)
            }
            PaddingMode::None => {
                let mut count = 0;
                let mut s = 0;
                while s + fft <= len {
                    count += 1;
                    s += hop;
                }
                (count > 0).then_some(count)
            }
        }
    }

    #[test]
    fn framing_rule_matches_brute_force() {
        for cfg in [SpectralConfig::BASELINE, SpectralConfig::REP_ALIGNED] {
            for padding in [PaddingMode::Center, PaddingMode::None] {
                for len in 1..=5000 {
                    assert_eq!(
                        n_frames(len, cfg.hop_size, cfg.fft_size, padding),
                        brute_force_frames(len, cfg.hop_size, cfg.fft_size, padding),
                        "len {len} hop {} {padding:?}",
                        cfg.hop_size
                    );
                }
            }
        }
    }

    #[test]
    fn presets_validate() {
        SpectralConfig::BASELINE.validate().unwrap();
        SpectralConfig::REP_ALIGNED.validate().unwrap();
        let mut c = SpectralConfig::BASELINE;
        c.window_size = 2048;
        assert!(c.validate().is_err());
        let mut c = SpectralConfig::BASELINE;
        c.hop_size = 1000;
        assert!(c.validate().is_err());
    }

    #[test]
    fn reflect_index_mirrors_without_repeating_edges() {
        let idx: Vec<usize> = (-4..9).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(idx, vec![2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1, 2]);
        assert_eq!(reflect_index(-5, 1), 0);
    }

    #[test]
    fn one_second_gives_fifty_and_hundred_frames() {
        let w = sine(440.0, 24_000, 0.3);
        assert_eq!(mel_spectrogram(&w, &SpectralConfig::REP_ALIGNED).unwrap().n_frames(), 50);
        assert_eq!(mel_spectrogram(&w, &SpectralConfig::BASELINE).unwrap().n_frames(), 100);
    }

    #[test]
    fn silence_sits_on_the_floor() {
        let m = mel_spectrogram(&Waveform::silence(24_000, 24_000), &SpectralConfig::REP_ALIGNED).unwrap();
        assert_eq!(m.frames.dim(), (50, 80));
        let floor = 1e-5f64.ln();
        assert!(m.frames.iter().all(|&v| v == floor));
    }

    #[test]
    fn sine_peaks_in_the_band_centered_nearest_its_frequency() {
        // Band centers straight from the Slaney formula, independent of the
        // filterbank construction.
        let (lo, hi) = (0.0, 15.0 + (12.0f64).ln() * 27.0 / 6.4f64.ln());
        let centers: Vec<f64> = (1..=80)
            .map(|i| {
                let mel = lo + (hi - lo) * i as f64 / 81.0;
                if mel < 15.0 {
                    mel * 200.0 / 3.0
                } else {
                    1000.0 * ((mel - 15.0) * 6.4f64.ln() / 27.0).exp()
                }
            })
            .collect();
        let nearest = centers
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 1000.0).abs().total_cmp(&(b.1 - 1000.0).abs()))
            .unwrap()
            .0;
        let m = mel_spectrogram(&sine(1000.0, 24_000, 0.5), &SpectralConfig::REP_ALIGNED).unwrap();
        let frame = m.frames.row(25);
        let argmax = frame
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(argmax, nearest);
    }

    #[test]
    fn log_mel_is_scale_covariant() {
        // power-of-two gains scale f32 samples exactly
        let w = sine(700.0, 12_000, 0.2);
        let k = 4.0f32;
        let a = mel_spectrogram(&w, &SpectralConfig::REP_ALIGNED).unwrap();
        let b = mel_spectrogram(&w.scaled(k), &SpectralConfig::REP_ALIGNED).unwrap();
        let floor = 1e-5f64.ln();
        let mut checked = 0;
        for (x, y) in a.frames.iter().zip(b.frames.iter()) {
            if *x > floor {
                assert!((y - x - (k as f64).ln()).abs() < 1e-6);
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn no_padding_rejects_short_input() {
        let mut c = SpectralConfig::REP_ALIGNED;
        c.padding = PaddingMode::None;
        assert!(mel_spectrogram(&Waveform::silence(1000, 24_000), &c).is_err());
        assert_eq!(mel_spectrogram(&Waveform::silence(1024, 24_000), &c).unwrap().n_frames(), 1);
    }

    #[test]
    fn rate_mismatch_is_rejected() {
        let w = Waveform::silence(16_000, 16_000);
        assert!(matches!(
            mel_spectrogram(&w, &SpectralConfig::REP_ALIGNED),
            Err(Error::RateMismatch { .. })
        ));
    }
}
