use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::melfile::{load_mel, persist_mel, MelFile};
use crate::error::{Error, Result};
use crate::representation::{
    grid_frames, LayerSpec, RepresentationBackend, RepresentationCache, RepresentationSequence, FRAME_SHIFT_MS,
};
use crate::signal::{mel_spectrogram, SpectralConfig, Waveform};

/// What a vocoder is conditioned on: a backend layer selection, or log-mel
/// frames on the same 20 ms grid as the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feature {
    Representation(LayerSpec),
    Mel,
}

impl Feature {
    /// Compatibility stamp written into checkpoints.
    pub fn tag(&self) -> String {
        match self {
            Feature::Representation(l) => l.tag(),
            Feature::Mel => "mel".into(),
        }
    }

    pub fn dim(&self, backend: &dyn RepresentationBackend) -> usize {
        match self {
            Feature::Representation(_) => backend.dim(),
            Feature::Mel => SpectralConfig::REP_ALIGNED.n_mels,
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feature::Representation(l) => l.fmt(f),
            Feature::Mel => f.write_str("mel"),
        }
    }
}

impl FromStr for Feature {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mel" => Ok(Feature::Mel),
            other => other.parse().map(Feature::Representation),
        }
    }
}

/// Feature extraction with on-disk caching. Mel files live under `<cache>/mel`.
pub struct FeatureExtractor<'a> {
    pub backend: &'a dyn RepresentationBackend,
    pub cache: RepresentationCache,
}

impl FeatureExtractor<'_> {
    /// Frames on the 20 ms grid of `wav`, and whether they came from the cache.
    pub fn extract(&self, wav: &Waveform, feature: Feature) -> Result<(RepresentationSequence, bool)> {
        match feature {
            Feature::Representation(spec) => {
                let (seq, _, hit) = self.cache.get_or_extract(wav, spec, self.backend)?;
                Ok((seq, hit))
            }
            Feature::Mel => self.mel(wav),
        }
    }

    fn mel_path(&self, wav: &Waveform, cfg: &SpectralConfig) -> Result<PathBuf> {
        let mut h = Sha256::new();
        h.update(wav.content_hash().as_bytes());
        h.update(serde_json::to_vec(cfg)?);
        let key = hex::encode(h.finalize());
        Ok(self.cache.root().join("mel").join(&key[..2]).join(format!("{key}.mel")))
    }

    fn mel(&self, wav: &Waveform) -> Result<(RepresentationSequence, bool)> {
        let cfg = SpectralConfig::REP_ALIGNED;
        let path = self.mel_path(wav, &cfg)?;
        if path.exists() {
            match load_mel(&path) {
                Ok(m) => return Ok((mel_sequence(m.frames, wav)?, true)),
                Err(e) => log::warn!("discarding unreadable mel cache entry {}: {e}", path.display()),
            }
        }
        let wav24 = crate::signal::resample(wav, cfg.sample_rate)?;
        let mel = mel_spectrogram(&wav24, &cfg)?;
        let n = grid_frames(wav.len(), wav.sample_rate(), FRAME_SHIFT_MS).max(1);
        let frames = ndarray::Array2::from_shape_fn((n, mel.n_mels()), |(t, j)| {
            mel.frames[[t.min(mel.n_frames() - 1), j]] as f32
        });
        persist_mel(
            &MelFile {
                frames: frames.clone(),
                hop_size: cfg.hop_size as u32,
                sample_rate: cfg.sample_rate,
            },
            &path,
        )?;
        Ok((mel_sequence(frames, wav)?, false))
    }
}

fn mel_sequence(frames: ndarray::Array2<f32>, wav: &Waveform) -> Result<RepresentationSequence> {
    RepresentationSequence::new(frames, FRAME_SHIFT_MS as f32, wav.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::representation::mock_backend;

    #[test]
    fn feature_names_parse() {
        assert_eq!("mel".parse::<Feature>().unwrap(), Feature::Mel);
        assert_eq!("layer:3".parse::<Feature>().unwrap(), Feature::Representation(LayerSpec::Single(3)));
        assert_eq!(Feature::Representation(LayerSpec::AverageAll).tag(), "avg");
        assert!("nope".parse::<Feature>().is_err());
    }

    #[test]
    fn mel_features_follow_the_frame_grid_and_cache() {
        let dir = tempfile::tempdir().unwrap();
        let backend = mock_backend(1, 2);
        let fx = FeatureExtractor {
            backend: &backend,
            cache: RepresentationCache::new(dir.path()),
        };
        let wav = Waveform::new((0..4800).map(|i| (i as f32 * 0.05).sin() * 0.3).collect(), 24_000).unwrap();
        let (a, hit_a) = fx.extract(&wav, Feature::Mel).unwrap();
        let (b, hit_b) = fx.extract(&wav, Feature::Mel).unwrap();
        assert_eq!((a.n_frames(), a.dim()), (10, 80));
        assert!(!hit_a && hit_b);
        assert_eq!(a, b);
    }
}
