use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::representation::REP_DIM;
use crate::signal::SpectralConfig;

/// Waveform samples per representation frame (20 ms at 24 kHz).
pub const SAMPLES_PER_FRAME: usize = 480;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub input_dim: usize,
    /// Channels after the input convolution; each upsampling stage halves them.
    pub initial_channels: usize,
    pub upsample_factors: Vec<usize>,
    pub upsample_kernels: Vec<usize>,
    pub resblock_kernels: Vec<usize>,
    /// One dilation list per residual-block kernel.
    pub resblock_dilations: Vec<Vec<usize>>,
}

impl GeneratorConfig {
    pub fn full() -> Self {
        Self {
            input_dim: REP_DIM,
            initial_channels: 512,
            upsample_factors: vec![10, 6, 4, 2],
            upsample_kernels: vec![20, 12, 8, 4],
            resblock_kernels: vec![3, 7, 11],
            resblock_dilations: vec![vec![1, 3, 5]; 3],
        }
    }

    pub fn toy() -> Self {
        Self {
            initial_channels: 32,
            resblock_kernels: vec![3],
            resblock_dilations: vec![vec![1, 3]],
            ..Self::full()
        }
    }

    /// A few thousand parameters; used for finite-difference gradient checks.
    pub fn tiny(input_dim: usize) -> Self {
        Self {
            input_dim,
            initial_channels: 8,
            ..Self::toy()
        }
    }

    pub fn hop(&self) -> usize {
        self.upsample_factors.iter().product()
    }

    /// Channel width after stage `i` (input convolution is stage 0).
    pub fn channels(&self, stage: usize) -> usize {
        (self.initial_channels >> stage).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("generator: {m}")));
        if self.hop() != SAMPLES_PER_FRAME {
            return bad(format!(
                "upsample factors {:?} multiply to {}, need {SAMPLES_PER_FRAME}",
                self.upsample_factors,
                self.hop()
            ));
        }
        if self.upsample_kernels.len() != self.upsample_factors.len() {
            return bad("one upsample kernel per factor required".into());
        }
        if self.resblock_kernels.is_empty() || self.resblock_kernels.len() != self.resblock_dilations.len() {
            return bad("one dilation list per residual kernel required".into());
        }
        if self.resblock_kernels.iter().any(|k| k % 2 == 0) {
            return bad("residual kernels must be odd".into());
        }
        if self.input_dim == 0 || self.initial_channels == 0 {
            return bad("dimensions must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleLayer {
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub groups: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub periods: Vec<usize>,
    /// Output channels of each strided period convolution.
    pub period_channels: Vec<usize>,
    pub period_kernel: usize,
    pub period_stride: usize,
    /// Number of multi-scale sub-discriminators (x1, x2, x4, ...).
    pub n_scales: usize,
    pub scale_layers: Vec<ScaleLayer>,
}

impl DiscriminatorConfig {
    pub fn full() -> Self {
        let l = |out_ch, kernel, stride, groups| ScaleLayer {
            out_ch,
            kernel,
            stride,
            groups,
        };
        Self {
            periods: vec![2, 3, 5, 7, 11],
            period_channels: vec![32, 128, 512, 1024, 1024],
            period_kernel: 5,
            period_stride: 3,
            n_scales: 3,
            scale_layers: vec![
                l(128, 15, 1, 1),
                l(128, 41, 2, 4),
                l(256, 41, 2, 16),
                l(512, 41, 4, 16),
                l(1024, 41, 4, 16),
                l(1024, 41, 1, 16),
                l(1024, 5, 1, 1),
            ],
        }
    }

    pub fn toy() -> Self {
        let l = |out_ch, kernel, stride, groups| ScaleLayer {
            out_ch,
            kernel,
            stride,
            groups,
        };
        Self {
            period_channels: vec![4, 8, 16, 16],
            scale_layers: vec![l(8, 15, 1, 1), l(16, 41, 4, 4), l(16, 41, 4, 4), l(16, 5, 1, 1)],
            ..Self::full()
        }
    }

    pub fn tiny() -> Self {
        let l = |out_ch, kernel, stride, groups| ScaleLayer {
            out_ch,
            kernel,
            stride,
            groups,
        };
        Self {
            period_channels: vec![2, 4],
            scale_layers: vec![l(4, 15, 1, 1), l(4, 41, 4, 2)],
            ..Self::full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("discriminator: {m}")));
        if self.periods.is_empty() && self.n_scales == 0 {
            return bad("at least one sub-discriminator required");
        }
        if self.periods.contains(&0) {
            return bad("periods must be positive");
        }
        if self.period_channels.is_empty() || self.scale_layers.is_empty() {
            return bad("layer lists must be nonempty");
        }
        let mut prev = 1;
        for layer in &self.scale_layers {
            if prev % layer.groups != 0 || layer.out_ch % layer.groups != 0 {
                return bad("scale layer channels not divisible by groups");
            }
            prev = layer.out_ch;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocoderConfig {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    /// Mel analysis of the reconstruction loss.
    pub mel: SpectralConfig,
    pub alpha: f64,
    pub beta: f64,
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    /// Multiplied into the learning rate after every epoch.
    pub lr_decay: f64,
    pub batch_size: usize,
    /// Training crop length in representation frames.
    pub segment_frames: usize,
    pub steps: u64,
    pub checkpoint_every: u64,
    pub seed: u64,
}

impl VocoderConfig {
    pub fn full() -> Self {
        Self {
            generator: GeneratorConfig::full(),
            discriminator: DiscriminatorConfig::full(),
            mel: SpectralConfig::REP_ALIGNED,
            alpha: 2.0,
            beta: 45.0,
            learning_rate: 2e-4,
            adam_betas: (0.8, 0.99),
            lr_decay: 0.999,
            batch_size: 16,
            segment_frames: 40,
            steps: 800_000,
            checkpoint_every: 10_000,
            seed: 1234,
        }
    }

    pub fn toy() -> Self {
        Self {
            generator: GeneratorConfig::toy(),
            discriminator: DiscriminatorConfig::toy(),
            learning_rate: 2e-3,
            batch_size: 1,
            segment_frames: 10,
            steps: 500,
            checkpoint_every: 250,
            ..Self::full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.discriminator.validate()?;
        self.mel.validate()?;
        if self.mel.hop_size != SAMPLES_PER_FRAME || self.mel.sample_rate != crate::signal::PIPELINE_RATE {
            return Err(Error::Config(
                "vocoder mel loss must use the 24 kHz / hop 480 analysis".into(),
            ));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.learning_rate > 0.0) {
            return Err(Error::Config("loss weights and learning rate must be non-negative".into()));
        }
        if self.batch_size == 0 || self.segment_frames == 0 {
            return Err(Error::Config("batch_size and segment_frames must be positive".into()));
        }
        Ok(())
    }
}
