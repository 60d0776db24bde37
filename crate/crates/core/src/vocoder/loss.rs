use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use super::discriminator::DiscriminatorOutput;
use crate::error::{Error, Result};
use crate::nn::{conv1d, scalar};
use crate::signal::{mel_filterbank, mel_spectrogram, SpectralConfig, Waveform};

/// One optimization step's loss components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub adv_d: f64,
    pub adv_g: f64,
    pub fm: f64,
    pub mel: f64,
    pub total_g: f64,
    pub alpha: f64,
    pub beta: f64,
}

pub fn total_generator_loss(adv_g: f64, fm: f64, mel: f64, alpha: f64, beta: f64) -> Result<LossBreakdown> {
    for (name, v) in [("adv_g", adv_g), ("fm", fm), ("mel", mel), ("alpha", alpha), ("beta", beta)] {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{name} = {v}")));
        }
    }
    Ok(LossBreakdown {
        adv_d: 0.0,
        adv_g,
        fm,
        mel,
        total_g: adv_g + alpha * fm + beta * mel,
        alpha,
        beta,
    })
}

fn check_pairs(a: &[Tensor], b: &[Tensor], what: &str) -> Result<()> {
    if a.is_empty() {
        return Err(Error::Shape(format!("empty {what} list")));
    }
    if a.len() != b.len() {
        return Err(Error::Shape(format!("{what}: {} real vs {} fake maps", a.len(), b.len())));
    }
    for (x, y) in a.iter().zip(b) {
        if x.dims() != y.dims() {
            return Err(Error::Shape(format!("{what}: map shapes {:?} vs {:?}", x.dims(), y.dims())));
        }
    }
    Ok(())
}

/// Least-squares discriminator loss, summed over sub-discriminators.
pub fn adv_loss_d(real: &[Tensor], fake: &[Tensor]) -> Result<Tensor> {
    check_pairs(real, fake, "score")?;
    let mut total: Option<Tensor> = None;
    for (r, f) in real.iter().zip(fake) {
        let term = ((r - 1.0)?.sqr()?.mean_all()? + f.sqr()?.mean_all()?)?;
        total = Some(match total {
            Some(t) => (t + term)?,
            None => term,
        });
    }
    Ok(total.expect("nonempty"))
}

/// Least-squares generator adversarial loss, summed over sub-discriminators.
pub fn adv_loss_g(fake: &[Tensor]) -> Result<Tensor> {
    if fake.is_empty() {
        return Err(Error::Shape("empty score list".into()));
    }
    let mut total = (&fake[0] - 1.0)?.sqr()?.mean_all()?;
    for f in &fake[1..] {
        total = (total + (f - 1.0)?.sqr()?.mean_all()?)?;
    }
    Ok(total)
}

/// Sum over sub-discriminators and layers of the mean absolute feature difference.
pub fn feature_matching_loss(real: &[Vec<Tensor>], fake: &[Vec<Tensor>]) -> Result<Tensor> {
    if real.is_empty() || real.len() != fake.len() {
        return Err(Error::Shape(format!(
            "feature lists: {} real vs {} fake sub-discriminators",
            real.len(),
            fake.len()
        )));
    }
    let mut total: Option<Tensor> = None;
    for (r, f) in real.iter().zip(fake) {
        check_pairs(r, f, "feature")?;
        for (a, b) in r.iter().zip(f) {
            let term = (a - b)?.abs()?.mean_all()?;
            total = Some(match total {
                Some(t) => (t + term)?,
                None => term,
            });
        }
    }
    Ok(total.expect("nonempty"))
}

/// L1 distance between the log-mel spectrograms of two waveforms.
pub fn mel_loss(real: &Waveform, fake: &Waveform, config: &SpectralConfig) -> Result<f64> {
    if real.len() != fake.len() {
        return Err(Error::Shape(format!(
            "mel loss needs equal lengths, got {} and {}",
            real.len(),
            fake.len()
        )));
    }
    let a = mel_spectrogram(real, config)?.frames;
    let b = mel_spectrogram(fake, config)?.frames;
    Ok((a - b).mapv(f64::abs).mean().unwrap_or(0.0))
}

/// Log-mel analysis as differentiable tensor ops: gather-based framing,
/// DFT as a strided convolution, magnitude, filterbank matmul, clamp, log.
#[derive(Debug, Clone)]
pub struct TensorMel {
    config: SpectralConfig,
    /// `(2 * n_freq, 1, fft_size)`: windowed cosine rows then sine rows.
    dft: Tensor,
    /// `(n_freq, n_mels)`
    basis: Tensor,
}

impl TensorMel {
    pub fn new(config: &SpectralConfig, dtype: DType) -> Result<Self> {
        config.validate()?;
        let n = config.fft_size;
        let nf = config.n_freq();
        let window = config.window();
        let mut kernel = vec![0.0f64; 2 * nf * n];
        for k in 0..nf {
            for (i, w) in window.iter().enumerate() {
                let phase = 2.0 * std::f64::consts::PI * ((k * i) % n) as f64 / n as f64;
                kernel[k * n + i] = w * phase.cos();
                kernel[(nf + k) * n + i] = -w * phase.sin();
            }
        }
        let dft = Tensor::from_vec(kernel, (2 * nf, 1, n), &Device::Cpu)?.to_dtype(dtype)?;
        let bank = mel_filterbank(config).weights;
        let basis: Vec<f64> = bank.t().iter().copied().collect();
        let basis = Tensor::from_vec(basis, (nf, config.n_mels), &Device::Cpu)?.to_dtype(dtype)?;
        Ok(Self {
            config: *config,
            dft,
            basis,
        })
    }

    pub fn config(&self) -> &SpectralConfig {
        &self.config
    }

    /// `(batch, 1, samples)` or `(batch, samples)` to `(batch, frames, n_mels)`.
    pub fn forward(&self, wav: &Tensor) -> Result<Tensor> {
        let wav = if wav.rank() == 3 { wav.squeeze(1)? } else { wav.clone() };
        let (b, len) = wav.dims2()?;
        let idx = self.config.padded_indices(len).ok_or_else(|| {
            Error::InvalidAudio(format!("{len} samples is shorter than one analysis frame"))
        })?;
        let idx = Tensor::from_vec(idx.iter().map(|&i| i as u32).collect::<Vec<_>>(), idx.len(), wav.device())?;
        let padded = wav.index_select(&idx, 1)?.reshape((b, 1, ()))?;
        let spec = conv1d(&padded, &self.dft, 0, self.config.hop_size, 1, 1)?;
        let nf = self.config.n_freq();
        let re = spec.narrow(1, 0, nf)?;
        let im = spec.narrow(1, nf, nf)?;
        let mag = ((re.sqr()? + im.sqr()?)? + 1e-18)?.sqrt()?;
        let mel = mag.transpose(1, 2)?.broadcast_matmul(&self.basis)?;
        Ok(mel.maximum(self.config.log_floor)?.log()?)
    }

    /// Mean absolute log-mel difference between two waveform batches.
    pub fn loss(&self, real: &Tensor, fake: &Tensor) -> Result<Tensor> {
        if real.dims() != fake.dims() {
            return Err(Error::Shape(format!(
                "mel loss needs equal shapes, got {:?} and {:?}",
                real.dims(),
                fake.dims()
            )));
        }
        Ok((self.forward(real)? - self.forward(fake)?)?.abs()?.mean_all()?)
    }
}

/// Generator-side losses for one batch, all as graph tensors.
pub struct GeneratorLosses {
    pub adv_g: Tensor,
    pub fm: Tensor,
    pub mel: Tensor,
    pub total: Tensor,
}

impl GeneratorLosses {
    pub fn compute(
        real_out: &DiscriminatorOutput,
        fake_out: &DiscriminatorOutput,
        mel_real: &Tensor,
        fake_wave: &Tensor,
        mel: &TensorMel,
        alpha: f64,
        beta: f64,
    ) -> Result<Self> {
        let adv_g = adv_loss_g(&fake_out.scores)?;
        let fm = feature_matching_loss(&real_out.features, &fake_out.features)?;
        let mel_fake = mel.forward(fake_wave)?;
        let mel = (mel_real - mel_fake)?.abs()?.mean_all()?;
        let total = ((&adv_g + (&fm * alpha)?)? + (&mel * beta)?)?;
        Ok(Self { adv_g, fm, mel, total })
    }

    pub fn breakdown(&self, adv_d: f64, alpha: f64, beta: f64) -> Result<LossBreakdown> {
        let mut b = total_generator_loss(scalar(&self.adv_g)?, scalar(&self.fm)?, scalar(&self.mel)?, alpha, beta)?;
        b.adv_d = adv_d;
        Ok(b)
    }
}
