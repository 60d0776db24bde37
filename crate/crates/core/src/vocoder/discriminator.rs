use candle_core::{Device, Tensor};
use rand_chacha::ChaCha8Rng;

use super::config::DiscriminatorConfig;
use super::generator::LRELU_SLOPE;
use crate::error::Result;
use crate::nn::{conv1d, leaky_relu, reflect_pad, Conv1d, ConvSpec, Init, ParamStore};

/// Score maps and intermediate feature maps of every sub-discriminator, in a
/// fixed order (periods first, then scales).
#[derive(Debug, Clone)]
pub struct DiscriminatorOutput {
    pub scores: Vec<Tensor>,
    pub features: Vec<Vec<Tensor>>,
}

impl DiscriminatorOutput {
    pub fn detach(&self) -> Self {
        Self {
            scores: self.scores.iter().map(|t| t.detach()).collect(),
            features: self
                .features
                .iter()
                .map(|f| f.iter().map(|t| t.detach()).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
struct ConvStack {
    convs: Vec<Conv1d>,
    post: Conv1d,
}

impl ConvStack {
    fn forward(&self, x: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let mut x = x.clone();
        let mut feats = Vec::with_capacity(self.convs.len() + 1);
        for conv in &self.convs {
            x = leaky_relu(&conv.forward(&x)?, LRELU_SLOPE)?;
            feats.push(x.clone());
        }
        let score = self.post.forward(&x)?;
        feats.push(score.clone());
        Ok((score, feats))
    }
}

/// Views the waveform as a `(length / period) x period` grid and convolves
/// along time within each phase column.
#[derive(Debug, Clone)]
struct PeriodDiscriminator {
    period: usize,
    stack: ConvStack,
}

impl PeriodDiscriminator {
    fn new(store: &mut ParamStore, period: usize, cfg: &DiscriminatorConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let name = format!("mpd{period}");
        let mut convs = Vec::new();
        let mut cin = 1;
        let last = cfg.period_channels.len() - 1;
        for (i, &cout) in cfg.period_channels.iter().enumerate() {
            let spec = ConvSpec {
                in_ch: cin,
                out_ch: cout,
                kernel: cfg.period_kernel,
                stride: if i == last { 1 } else { cfg.period_stride },
                dilation: 1,
                groups: 1,
                padding: cfg.period_kernel / 2,
            };
            convs.push(Conv1d::new(store, &format!("{name}.c{i}"), spec, Init::FanIn, rng)?);
            cin = cout;
        }
        let post = Conv1d::new(store, &format!("{name}.post"), ConvSpec::same(cin, 1, 3, 1), Init::FanIn, rng)?;
        Ok(Self {
            period,
            stack: ConvStack { convs, post },
        })
    }

    fn forward(&self, x: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let (b, _, t) = x.dims3()?;
        let p = self.period;
        let pad = (p - t % p) % p;
        let x = if pad > 0 && t > pad {
            reflect_pad(x, 0, pad)?
        } else if pad > 0 {
            x.pad_with_zeros(2, 0, pad)?
        } else {
            x.clone()
        };
        let rows = (t + pad) / p;
        let x = x
            .reshape((b, rows, p))?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((b * p, 1, rows))?;
        self.stack.forward(&x)
    }
}

#[derive(Debug, Clone)]
struct ScaleDiscriminator {
    stack: ConvStack,
}

impl ScaleDiscriminator {
    fn new(store: &mut ParamStore, index: usize, cfg: &DiscriminatorConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut convs = Vec::new();
        let mut cin = 1;
        for (i, l) in cfg.scale_layers.iter().enumerate() {
            let spec = ConvSpec {
                in_ch: cin,
                out_ch: l.out_ch,
                kernel: l.kernel,
                stride: l.stride,
                dilation: 1,
                groups: l.groups,
                padding: l.kernel / 2,
            };
            convs.push(Conv1d::new(store, &format!("msd{index}.c{i}"), spec, Init::FanIn, rng)?);
            cin = l.out_ch;
        }
        let post = Conv1d::new(store, &format!("msd{index}.post"), ConvSpec::same(cin, 1, 3, 1), Init::FanIn, rng)?;
        Ok(Self {
            stack: ConvStack { convs, post },
        })
    }
}

/// Multi-period plus multi-scale discriminator ensemble.
#[derive(Debug, Clone)]
pub struct Discriminator {
    periods: Vec<PeriodDiscriminator>,
    scales: Vec<ScaleDiscriminator>,
}

impl Discriminator {
    pub fn new(store: &mut ParamStore, cfg: &DiscriminatorConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let periods = cfg
            .periods
            .iter()
            .map(|&p| PeriodDiscriminator::new(store, p, cfg, rng))
            .collect::<Result<Vec<_>>>()?;
        let scales = (0..cfg.n_scales)
            .map(|i| ScaleDiscriminator::new(store, i, cfg, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { periods, scales })
    }

    pub fn n_sub(&self) -> usize {
        self.periods.len() + self.scales.len()
    }

    /// Scores a `(batch, 1, samples)` waveform batch.
    pub fn forward(&self, x: &Tensor) -> Result<DiscriminatorOutput> {
        let mut scores = Vec::with_capacity(self.n_sub());
        let mut features = Vec::with_capacity(self.n_sub());
        for d in &self.periods {
            let (s, f) = d.forward(x)?;
            scores.push(s);
            features.push(f);
        }
        let mut scaled = x.clone();
        for (i, d) in self.scales.iter().enumerate() {
            if i > 0 {
                scaled = avg_pool(&scaled)?;
            }
            let (s, f) = d.stack.forward(&scaled)?;
            scores.push(s);
            features.push(f);
        }
        Ok(DiscriminatorOutput { scores, features })
    }
}

/// Average pooling with window 4, stride 2 and zero padding 2.
fn avg_pool(x: &Tensor) -> Result<Tensor> {
    let kernel = Tensor::full(0.25, (1, 1, 4), &Device::Cpu)?.to_dtype(x.dtype())?;
    conv1d(x, &kernel, 2, 2, 1, 1)
}
