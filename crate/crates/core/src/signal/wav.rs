use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{resample, Waveform};
use crate::error::{Error, IoContext, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavFormat {
    Pcm16,
    #[default]
    Float32,
}

/// Reads a WAV file at its native rate, down-mixing to mono.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f32;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f32 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_err)?
        }
        (fmt, bits) => {
            return Err(Error::InvalidAudio(format!(
                "{}: unsupported encoding {fmt:?} {bits}-bit",
                path.display()
            )))
        }
    };
    if interleaved.is_empty() {
        return Err(Error::InvalidAudio(format!("{}: no samples", path.display())));
    }
    let mono = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect()
    };
    Waveform::new(mono, spec.sample_rate)
}

/// Reads a WAV file and resamples it to `target_rate`.
pub fn load_audio(path: &Path, target_rate: u32) -> Result<Waveform> {
    let wav = read_wav(path)?;
    resample(&wav, target_rate)
}

/// Writes a mono WAV, creating missing parent directories.
pub fn write_wav(path: &Path, wav: &Waveform, format: WavFormat) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_path("create directory", dir)?;
    }
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = match format {
        WavFormat::Pcm16 => WavSpec {
            channels: 1,
            sample_rate: wav.sample_rate(),
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        },
        WavFormat::Float32 => WavSpec {
            channels: 1,
            sample_rate: wav.sample_rate(),
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        },
    };
    let mut writer = WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in wav.samples() {
        match format {
            WavFormat::Pcm16 => {
                let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
                writer.write_sample(v).map_err(wav_err)?;
            }
            WavFormat::Float32 => writer.write_sample(s).map_err(wav_err)?,
        }
    }
    writer.finalize().map_err(wav_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f32, rate: u32, len: usize) -> Waveform {
        let s = (0..len)
            .map(|i| 0.5 * (2.0 * std::f32::consts::PI * freq * i as f32 / rate as f32).sin())
            .collect();
        Waveform::new(s, rate).unwrap()
    }

    #[test]
    fn float_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let w = sine(440.0, 24_000, 1000);
        write_wav(&p, &w, WavFormat::Float32).unwrap();
        assert_eq!(read_wav(&p).unwrap(), w);
        // same rate: identity, bit for bit
        assert_eq!(load_audio(&p, 24_000).unwrap(), w);
    }

    #[test]
    fn pcm16_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let w = sine(440.0, 16_000, 1000);
        write_wav(&p, &w, WavFormat::Pcm16).unwrap();
        let r = read_wav(&p).unwrap();
        for (a, b) in r.samples().iter().zip(w.samples()) {
            assert!((a - b).abs() < 1.0 / 16000.0);
        }
    }

    #[test]
    fn stereo_is_downmixed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        for _ in 0..10 {
            w.write_sample(1.0f32).unwrap();
            w.write_sample(0.0f32).unwrap();
        }
        w.finalize().unwrap();
        let r = read_wav(&p).unwrap();
        assert_eq!(r.len(), 10);
        assert!(r.samples().iter().all(|&s| s == 0.5));
    }

    #[test]
    fn halving_rate_halves_length() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.wav");
        write_wav(&p, &sine(440.0, 48_000, 48_001), WavFormat::Float32).unwrap();
        let r = load_audio(&p, 24_000).unwrap();
        assert_eq!(r.sample_rate(), 24_000);
        assert!((r.len() as i64 - 24_000).abs() <= 1);
    }

    #[test]
    fn errors_on_missing_and_empty_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_audio(&dir.path().join("none.wav"), 24_000).is_err());
        let p = dir.path().join("empty.wav");
        write_wav(&p, &Waveform::silence(0, 24_000), WavFormat::Float32).unwrap();
        assert!(matches!(load_audio(&p, 24_000), Err(Error::InvalidAudio(_))));
        let junk = dir.path().join("junk.wav");
        std::fs::write(&junk, b"definitely not a riff file").unwrap();
        assert!(load_audio(&junk, 24_000).is_err());
    }
}
