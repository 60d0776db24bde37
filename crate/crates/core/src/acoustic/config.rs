use serde::{Deserialize, Serialize};

use super::inventory_size;
use crate::error::{Error, Result};
use crate::representation::REP_DIM;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcousticConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    /// Transformer blocks between the length regulator and the output
    /// projection; 0 means projection only.
    pub decoder_layers: usize,
    pub ffn_hidden: usize,
    /// Kernel sizes of the two convolutions in each block's feed-forward part.
    pub ffn_kernels: (usize, usize),
    pub predictor_filter: usize,
    pub predictor_kernel: usize,
    /// Quantization bins of the pitch and energy embeddings.
    pub n_bins: usize,
    pub output_dim: usize,
    pub dropout: f64,
    pub predictor_dropout: f64,
    pub loss_weights: LossWeights,
    pub peak_lr: f64,
    pub warmup_steps: u64,
    pub adam_betas: (f64, f64),
    pub batch_size: usize,
    pub steps: u64,
    pub checkpoint_every: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub rep: f64,
    pub duration: f64,
    pub pitch: f64,
    pub energy: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            rep: 1.0,
            duration: 1.0,
            pitch: 1.0,
            energy: 1.0,
        }
    }
}

impl AcousticConfig {
    pub fn full() -> Self {
        Self {
            vocab_size: inventory_size(),
            hidden: 256,
            heads: 2,
            encoder_layers: 4,
            decoder_layers: 0,
            ffn_hidden: 1024,
            ffn_kernels: (9, 1),
            predictor_filter: 256,
            predictor_kernel: 3,
            n_bins: 256,
            output_dim: REP_DIM,
            dropout: 0.2,
            predictor_dropout: 0.5,
            loss_weights: LossWeights::default(),
            peak_lr: 1e-3,
            warmup_steps: 4000,
            adam_betas: (0.9, 0.98),
            batch_size: 16,
            steps: 900_000,
            checkpoint_every: 10_000,
            seed: 1234,
        }
    }

    pub fn toy() -> Self {
        Self {
            hidden: 64,
            encoder_layers: 2,
            ffn_hidden: 128,
            predictor_filter: 64,
            dropout: 0.0,
            predictor_dropout: 0.0,
            warmup_steps: 100,
            batch_size: 5,
            steps: 2000,
            checkpoint_every: 1000,
            ..Self::full()
        }
    }

    /// Small enough for finite-difference gradient checks.
    pub fn tiny() -> Self {
        Self {
            hidden: 8,
            heads: 2,
            encoder_layers: 1,
            decoder_layers: 1,
            ffn_hidden: 12,
            ffn_kernels: (3, 1),
            predictor_filter: 6,
            n_bins: 16,
            output_dim: 10,
            batch_size: 2,
            steps: 4,
            checkpoint_every: 2,
            ..Self::toy()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("acoustic: {m}")));
        if self.hidden == 0 || self.heads == 0 || self.hidden % self.heads != 0 {
            return bad("hidden must be a positive multiple of heads");
        }
        if self.hidden % 2 != 0 {
            return bad("hidden must be even for the positional encoding");
        }
        if self.vocab_size == 0 || self.output_dim == 0 || self.n_bins < 2 {
            return bad("vocab_size, output_dim must be positive and n_bins >= 2");
        }
        if self.ffn_kernels.0 % 2 == 0 || self.ffn_kernels.1 % 2 == 0 || self.predictor_kernel % 2 == 0 {
            return bad("kernel sizes must be odd");
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.predictor_dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if self.peak_lr <= 0.0 || self.batch_size == 0 {
            return bad("peak_lr and batch_size must be positive");
        }
        Ok(())
    }

    /// Inverse-square-root schedule with linear warmup, peaking at `peak_lr`.
    pub fn learning_rate(&self, step: u64) -> f64 {
        let s = step.max(1) as f64;
        let w = self.warmup_steps.max(1) as f64;
        self.peak_lr * (s / w).min((w / s).sqrt())
    }
}
