use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{RepresentationBackend, REP_DIM};
use crate::error::Result;
use crate::signal::{mel_spectrogram, PaddingMode, SpectralConfig, Waveform};

const MOCK_RATE: u32 = 16_000;

/// Log-mel analysis the mock runs on its 16 kHz input: 25 ms windows, 20 ms hop.
const MOCK_MEL: SpectralConfig = SpectralConfig {
    fft_size: 512,
    hop_size: 320,
    window_size: 400,
    n_mels: 80,
    sample_rate: MOCK_RATE,
    fmin: 0.0,
    fmax: 8000.0,
    log_floor: 1e-5,
    padding: PaddingMode::Center,
};

/// Stand-in for a frozen pretrained model: layer `k` is a fixed, seeded affine
/// map of the input's frame-level log-mel features.
#[derive(Debug, Clone)]
pub struct MockBackend {
    seed: u64,
    dim: usize,
    maps: Vec<(Array2<f32>, Array1<f32>)>,
}

pub fn mock_backend(seed: u64, n_layers: usize) -> MockBackend {
    MockBackend::new(seed, n_layers, REP_DIM)
}

impl MockBackend {
    pub fn new(seed: u64, n_layers: usize, dim: usize) -> Self {
        let n_layers = n_layers.max(1);
        let n_mels = MOCK_MEL.n_mels;
        let w_dist = Normal::new(0.0f32, 1.0 / (n_mels as f32).sqrt()).unwrap();
        let b_dist = Normal::new(0.0f32, 0.1).unwrap();
        let maps = (0..n_layers)
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(k as u64 + 1)));
                let w = Array2::from_shape_fn((n_mels, dim), |_| w_dist.sample(&mut rng));
                let b = Array1::from_shape_fn(dim, |_| b_dist.sample(&mut rng));
                (w, b)
            })
            .collect();
        Self { seed, dim, maps }
    }

    /// Normalized 80-band log-mel features the layer maps act on.
    fn features(&self, wav: &Waveform) -> Result<Array2<f32>> {
        let mel = mel_spectrogram(wav, &MOCK_MEL)?;
        // roughly zero-mean, unit-scale for speech-level input
        Ok(mel.frames.mapv(|v| ((v + 6.0) / 3.0) as f32))
    }
}

impl RepresentationBackend for MockBackend {
    fn id(&self) -> String {
        format!("mock-s{}-l{}-d{}", self.seed, self.maps.len(), self.dim)
    }

    fn sample_rate(&self) -> u32 {
        MOCK_RATE
    }

    fn n_layers(&self) -> usize {
        self.maps.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn layers(&self, wav: &Waveform) -> Result<Vec<Array2<f32>>> {
        let feats = self.features(wav)?;
        Ok(self
            .maps
            .iter()
            .map(|(w, b)| feats.dot(w) + &b.view().insert_axis(Axis(0)))
            .collect())
    }
}
