use serde::{Deserialize, Serialize};

use super::PhonemeSequence;
use crate::error::{Error, Result};
use crate::signal::Waveform;

const MIN_F0: f64 = 60.0;
const MAX_F0: f64 = 500.0;
const VOICING_THRESHOLD: f64 = 0.3;

/// Samples per frame at the waveform's rate for a 20 ms grid.
fn frame_len(wav: &Waveform) -> usize {
    (wav.sample_rate() as usize / 50).max(1)
}

/// Frame RMS on the 20 ms grid; frame `t` covers samples `[t * hop, (t + 1) * hop)`.
pub fn frame_energy(wav: &Waveform, n_frames: usize) -> Vec<f32> {
    let hop = frame_len(wav);
    let s = wav.samples();
    (0..n_frames)
        .map(|t| {
            let lo = (t * hop).min(s.len());
            let hi = ((t + 1) * hop).min(s.len());
            if hi == lo {
                return 0.0;
            }
            let p: f64 = s[lo..hi].iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / (hi - lo) as f64;
            p.sqrt() as f32
        })
        .collect()
}

/// Autocorrelation F0 per 20 ms frame (40 ms analysis window centered on the
/// frame), 0 for frames whose normalized autocorrelation peak stays below the
/// voicing threshold.
pub fn frame_pitch(wav: &Waveform, n_frames: usize) -> Vec<f32> {
    let rate = wav.sample_rate() as f64;
    let hop = frame_len(wav);
    let win = 2 * hop;
    let s = wav.samples();
    let min_lag = (rate / MAX_F0).floor() as usize;
    let max_lag = (rate / MIN_F0).ceil() as usize;
    (0..n_frames)
        .map(|t| {
            let center = t * hop + hop / 2;
            let start = center.saturating_sub(win / 2);
            let end = (start + win + max_lag).min(s.len());
            if end <= start + win / 2 {
                return 0.0;
            }
            let x: Vec<f64> = s[start..end].iter().map(|&v| v as f64).collect();
            let n = win.min(x.len());
            let r = |lag: usize| -> f64 {
                let m = n.min(x.len().saturating_sub(lag));
                if m == 0 {
                    return 0.0;
                }
                let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    xy += x[i] * x[i + lag];
                    xx += x[i] * x[i];
                    yy += x[i + lag] * x[i + lag];
                }
                if xx <= 1e-12 || yy <= 1e-12 {
                    0.0
                } else {
                    xy / (xx * yy).sqrt()
                }
            };
            let scores: Vec<f64> = (min_lag..=max_lag).map(r).collect();
            // first strong local maximum avoids octave-down errors
            let best = scores.iter().cloned().fold(f64::MIN, f64::max);
            if best < VOICING_THRESHOLD {
                return 0.0;
            }
            let mut pick = scores.iter().position(|&v| v == best).unwrap_or(0);
            for i in 1..scores.len().saturating_sub(1) {
                if scores[i] >= 0.9 * best && scores[i] >= scores[i - 1] && scores[i] >= scores[i + 1] {
                    pick = i;
                    break;
                }
            }
            let refine = if pick > 0 && pick + 1 < scores.len() {
                let (a, b, c) = (scores[pick - 1], scores[pick], scores[pick + 1]);
                let den = a - 2.0 * b + c;
                if den.abs() > 1e-12 {
                    0.5 * (a - c) / den
                } else {
                    0.0
                }
            } else {
                0.0
            };
            (rate / ((min_lag + pick) as f64 + refine)) as f32
        })
        .collect()
}

/// Per-phoneme mean of frame values. With `skip_zeros`, zero frames
/// (unvoiced pitch) are excluded and an all-zero phoneme averages to 0.
pub fn phoneme_average(values: &[f32], durations: &[u32], skip_zeros: bool) -> Result<Vec<f32>> {
    let total: usize = durations.iter().map(|&d| d as usize).sum();
    if total != values.len() {
        return Err(Error::Shape(format!(
            "durations cover {total} frames, got {} frame values",
            values.len()
        )));
    }
    let mut pos = 0;
    Ok(durations
        .iter()
        .map(|&d| {
            let seg = &values[pos..pos + d as usize];
            pos += d as usize;
            let kept: Vec<f64> = seg
                .iter()
                .filter(|&&v| !skip_zeros || v > 0.0)
                .map(|&v| v as f64)
                .collect();
            if kept.is_empty() {
                0.0
            } else {
                (kept.iter().sum::<f64>() / kept.len() as f64) as f32
            }
        })
        .collect())
}

/// Normalization statistics and quantization ranges for pitch and energy,
/// computed on the training set and stored with the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceStats {
    pub pitch_mean: f64,
    pub pitch_std: f64,
    pub energy_mean: f64,
    pub energy_std: f64,
    /// Normalized value range covered by the bins.
    pub pitch_range: (f64, f64),
    pub energy_range: (f64, f64),
}

impl Default for VarianceStats {
    fn default() -> Self {
        Self {
            pitch_mean: 0.0,
            pitch_std: 1.0,
            energy_mean: 0.0,
            energy_std: 1.0,
            pitch_range: (-3.0, 3.0),
            energy_range: (-3.0, 3.0),
        }
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 1.0);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
    (m, if var > 1e-12 { var.sqrt() } else { 1.0 })
}

fn range(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() && hi > lo {
        (lo, hi)
    } else {
        (-1.0, 1.0)
    }
}

impl VarianceStats {
    /// Voiced phonemes define the pitch statistics; every phoneme counts for energy.
    pub fn from_sequences<'a>(seqs: impl IntoIterator<Item = &'a PhonemeSequence>) -> Self {
        let mut pitch = Vec::new();
        let mut energy = Vec::new();
        for s in seqs {
            if let Some(p) = &s.pitch {
                pitch.extend(p.iter().filter(|&&v| v > 0.0).map(|&v| v as f64));
            }
            if let Some(e) = &s.energy {
                energy.extend(e.iter().map(|&v| v as f64));
            }
        }
        let (pitch_mean, pitch_std) = mean_std(&pitch);
        let (energy_mean, energy_std) = mean_std(&energy);
        let mut stats = Self {
            pitch_mean,
            pitch_std,
            energy_mean,
            energy_std,
            ..Self::default()
        };
        let np: Vec<f64> = pitch.iter().map(|&v| stats.normalize_pitch(v)).chain([0.0]).collect();
        let ne: Vec<f64> = energy.iter().map(|&v| stats.normalize_energy(v)).collect();
        stats.pitch_range = range(&np);
        stats.energy_range = range(&ne);
        stats
    }

    /// Unvoiced (0 Hz) maps to 0, the voiced mean.
    pub fn normalize_pitch(&self, hz: f64) -> f64 {
        if hz <= 0.0 {
            0.0
        } else {
            (hz - self.pitch_mean) / self.pitch_std
        }
    }

    pub fn normalize_energy(&self, rms: f64) -> f64 {
        (rms - self.energy_mean) / self.energy_std
    }
}

/// Bin index of `value` among `n_bins` bins whose `n_bins - 1` boundaries are
/// evenly spaced over `range`.
pub fn bucketize(value: f64, range: (f64, f64), n_bins: usize) -> u32 {
    let (lo, hi) = range;
    let cuts = n_bins - 1;
    let mut idx = 0;
    for i in 0..cuts {
        let boundary = if cuts == 1 { lo } else { lo + (hi - lo) * i as f64 / (cuts - 1) as f64 };
        if value > boundary {
            idx = i + 1;
        }
    }
    idx as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(f: f64, secs: f64) -> Waveform {
        let n = (24_000.0 * secs) as usize;
        let s = (0..n)
            .map(|i| {
                let t = i as f64 / 24_000.0;
                (0.5 * (2.0 * std::f64::consts::PI * f * t).sin() + 0.2 * (4.0 * std::f64::consts::PI * f * t).sin())
                    as f32
            })
            .collect();
        Waveform::new(s, 24_000).unwrap()
    }

    #[test]
    fn pitch_of_harmonic_tone() {
        for f in [80.0, 150.0, 220.0, 410.0] {
            let p = frame_pitch(&tone(f, 0.5), 25);
            for v in &p[2..23] {
                assert!((*v as f64 - f).abs() / f < 0.01, "{f}: {v}");
            }
        }
    }

    #[test]
    fn silence_and_noise_are_unvoiced() {
        assert!(frame_pitch(&Waveform::silence(12_000, 24_000), 25).iter().all(|&v| v == 0.0));
        let mut x = 1u64;
        let noise: Vec<f32> = (0..12_000)
            .map(|_| {
                x ^= x << 13;
                x ^= x >> 7;
                x ^= x << 17;
                (x as f64 / u64::MAX as f64 - 0.5) as f32
            })
            .collect();
        let p = frame_pitch(&Waveform::new(noise, 24_000).unwrap(), 25);
        assert!(p.iter().filter(|&&v| v > 0.0).count() <= 2);
    }

    #[test]
    fn energy_is_frame_rms() {
        let w = Waveform::new(vec![0.5; 960], 24_000).unwrap();
        assert_eq!(frame_energy(&w, 3), vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn averages_skip_unvoiced() {
        let v = [100.0, 0.0, 120.0, 0.0, 0.0, 7.0];
        assert_eq!(phoneme_average(&v, &[3, 2, 1], true).unwrap(), vec![110.0, 0.0, 7.0]);
        assert_eq!(phoneme_average(&v, &[3, 2, 1], false).unwrap()[0], 220.0 / 3.0);
        assert!(phoneme_average(&v, &[3, 2], true).is_err());
    }

    #[test]
    fn buckets_cover_range() {
        assert_eq!(bucketize(-10.0, (-1.0, 1.0), 4), 0);
        assert_eq!(bucketize(10.0, (-1.0, 1.0), 4), 3);
        assert_eq!(bucketize(0.5, (-1.0, 1.0), 4), 2);
    }
}
