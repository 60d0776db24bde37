//! Representation-conditioned GAN vocoder.
//!
//! The generator upsamples a 768-dim, 20 ms representation sequence by 480
//! to a 24 kHz waveform. Training alternates a least-squares discriminator
//! update over multi-period and multi-scale sub-discriminators with a
//! generator update on `adv_g + alpha * fm + beta * mel`.

pub mod config;
pub mod discriminator;
pub mod generator;
pub mod loss;
pub mod train;

pub use config::{DiscriminatorConfig, GeneratorConfig, ScaleLayer, VocoderConfig, SAMPLES_PER_FRAME};
pub use discriminator::{Discriminator, DiscriminatorOutput};
pub use generator::{rep_tensor, Generator};
pub use loss::{
    adv_loss_d, adv_loss_g, feature_matching_loss, mel_loss, total_generator_loss, GeneratorLosses, LossBreakdown,
    TensorMel,
};
pub use train::{train_vocoder, TrainOutputs, Vocoder, VocoderExample, VocoderTrainer, VOCODER_KIND};
