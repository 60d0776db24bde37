use candle_core::{DType, Device, Tensor};
use rand_chacha::ChaCha8Rng;

use super::config::{GeneratorConfig, SAMPLES_PER_FRAME};
use crate::error::{Error, Result};
use crate::nn::{leaky_relu, Conv1d, ConvSpec, Init, ParamStore, Upsample};
use crate::representation::RepresentationSequence;
use crate::signal::{Waveform, PIPELINE_RATE};

pub const LRELU_SLOPE: f64 = 0.1;
const UPSAMPLE_INIT: Init = Init::Normal(0.01);

/// Residual stack of dilated convolutions, each followed by a plain one.
#[derive(Debug, Clone)]
struct ResBlock {
    dilated: Vec<Conv1d>,
    plain: Vec<Conv1d>,
}

impl ResBlock {
    fn new(
        store: &mut ParamStore,
        name: &str,
        channels: usize,
        kernel: usize,
        dilations: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let mut dilated = Vec::new();
        let mut plain = Vec::new();
        for (i, &d) in dilations.iter().enumerate() {
            let spec = ConvSpec::same(channels, channels, kernel, d);
            dilated.push(Conv1d::new(store, &format!("{name}.d{i}"), spec, UPSAMPLE_INIT, rng)?);
            let spec = ConvSpec::same(channels, channels, kernel, 1);
            plain.push(Conv1d::new(store, &format!("{name}.p{i}"), spec, UPSAMPLE_INIT, rng)?);
        }
        Ok(Self { dilated, plain })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut x = x.clone();
        for (c1, c2) in self.dilated.iter().zip(&self.plain) {
            let y = c1.forward(&leaky_relu(&x, LRELU_SLOPE)?)?;
            let y = c2.forward(&leaky_relu(&y, LRELU_SLOPE)?)?;
            x = (x + y)?;
        }
        Ok(x)
    }
}

#[derive(Debug, Clone)]
struct Stage {
    upsample: Upsample,
    blocks: Vec<ResBlock>,
}

/// Representation-to-waveform generator: input convolution, transposed
/// convolution stages with multi-receptive-field residual fusion, output
/// convolution and tanh.
#[derive(Debug, Clone)]
pub struct Generator {
    config: GeneratorConfig,
    conv_pre: Conv1d,
    stages: Vec<Stage>,
    conv_post: Conv1d,
}

impl Generator {
    pub fn new(store: &mut ParamStore, config: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let conv_pre = Conv1d::new(
            store,
            "gen.pre",
            ConvSpec::same(config.input_dim, config.channels(0), 7, 1),
            Init::FanIn,
            rng,
        )?;
        let mut stages = Vec::new();
        for (i, (&factor, &kernel)) in config.upsample_factors.iter().zip(&config.upsample_kernels).enumerate() {
            let (cin, cout) = (config.channels(i), config.channels(i + 1));
            let upsample = Upsample::new(store, &format!("gen.up{i}"), cin, cout, factor, kernel, UPSAMPLE_INIT, rng)?;
            let blocks = config
                .resblock_kernels
                .iter()
                .zip(&config.resblock_dilations)
                .enumerate()
                .map(|(j, (&k, dil))| ResBlock::new(store, &format!("gen.rb{i}.{j}"), cout, k, dil, rng))
                .collect::<Result<Vec<_>>>()?;
            stages.push(Stage { upsample, blocks });
        }
        let last = config.channels(config.upsample_factors.len());
        let conv_post = Conv1d::new(store, "gen.post", ConvSpec::same(last, 1, 7, 1), UPSAMPLE_INIT, rng)?;
        Ok(Self {
            config: config.clone(),
            conv_pre,
            stages,
            conv_post,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    /// `(batch, input_dim, frames)` to `(batch, 1, frames * 480)`.
    pub fn forward(&self, rep: &Tensor) -> Result<Tensor> {
        let (_, dim, _) = rep.dims3()?;
        if dim != self.config.input_dim {
            return Err(Error::Shape(format!(
                "generator expects {}-dim input, got {dim}",
                self.config.input_dim
            )));
        }
        let mut x = self.conv_pre.forward(rep)?;
        for stage in &self.stages {
            x = stage.upsample.forward(&leaky_relu(&x, LRELU_SLOPE)?)?;
            let mut fused = stage.blocks[0].forward(&x)?;
            for block in &stage.blocks[1..] {
                fused = (fused + block.forward(&x)?)?;
            }
            x = (fused / stage.blocks.len() as f64)?;
        }
        let x = self.conv_post.forward(&leaky_relu(&x, 0.01)?)?;
        Ok(x.tanh()?)
    }

    /// Synthesizes a 24 kHz waveform of exactly `n_frames * 480` samples.
    pub fn generate(&self, rep: &RepresentationSequence, dtype: DType) -> Result<Waveform> {
        if rep.dim() != self.config.input_dim {
            return Err(Error::Shape(format!(
                "representation dim {} does not match vocoder input dim {}",
                rep.dim(),
                self.config.input_dim
            )));
        }
        if rep.n_frames() == 0 {
            return Waveform::new(Vec::new(), PIPELINE_RATE);
        }
        let x = rep_tensor(rep, dtype)?;
        let y = self.forward(&x)?.flatten_all()?.to_dtype(DType::F32)?.to_vec1::<f32>()?;
        debug_assert_eq!(y.len(), rep.n_frames() * SAMPLES_PER_FRAME);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("generator produced non-finite samples".into()));
        }
        Waveform::new(y, PIPELINE_RATE)
    }
}

/// `(1, dim, frames)` tensor of a representation sequence.
pub fn rep_tensor(rep: &RepresentationSequence, dtype: DType) -> Result<Tensor> {
    let (n, d) = rep.frames.dim();
    let data: Vec<f32> = rep.frames.iter().copied().collect();
    Ok(Tensor::from_vec(data, (1, n, d), &Device::Cpu)?
        .transpose(1, 2)?
        .contiguous()?
        .to_dtype(dtype)?)
}
